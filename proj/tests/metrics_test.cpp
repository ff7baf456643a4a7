// Copyright 2026 The PEN Toolkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pen/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "random_text.hpp"

namespace pen {
namespace {

using Labels = std::vector<std::string>;

TEST(Cer, Examples) {
  EXPECT_EQ(cer("abc", "abc"), 0.0);
  EXPECT_DOUBLE_EQ(cer("abd", "abc"), 1.0 / 3);
  EXPECT_DOUBLE_EQ(cer("abcd", "ab"), 1.0);
  EXPECT_DOUBLE_EQ(cer("xxxxxxx", "ab"), 3.5);  // may exceed 1
  EXPECT_DOUBLE_EQ(cer("", "abcd"), 1.0);
  // Characters are code points: precomposed õ is one, decomposed õ two.
  EXPECT_DOUBLE_EQ(cer("cõsul", "consul"), 2.0 / 6);
  EXPECT_DOUBLE_EQ(cer(canonical_decompose_utf8("cõsul"), "consul"), 1.0 / 6);
  EXPECT_THROW(cer("abc", ""), Error);
}

TEST(Wer, Examples) {
  EXPECT_EQ(wer("et dixit ad", "et dixit ad"), 0.0);
  EXPECT_DOUBLE_EQ(wer("et dixit ab", "et dixit ad"), 1.0 / 3);
  EXPECT_DOUBLE_EQ(wer("", "et dixit ad"), 1.0);
  EXPECT_DOUBLE_EQ(wer("dixit, et", "dixit et"), 0.5);
  EXPECT_DOUBLE_EQ(wer("dixit, et", "dixit et", stripped_tokens), 0.0);
  EXPECT_THROW(wer("abc", "   "), Error);
}

TEST(Levenshtein, MatchesFullMatrixOracle) {
  std::mt19937_64 rng(31);
  const std::u32string alphabet = U"abcõ ";
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = testing_util::random_string(rng, testing_util::below(rng, 60), alphabet);
    const auto b = testing_util::random_string(rng, testing_util::below(rng, 60), alphabet);
    ASSERT_EQ(levenshtein(a, b), oracle::edit_distance(a, b));
  }
}

TEST(EditAccumulator, MicroIsNotMeanOfRates) {
  EditAccumulator acc;
  acc.add("la", "abd", "abc");        // 1/3
  acc.add("la", "a", "abcdefghij");   // 9/10
  const EditReport micro = acc.report();
  EXPECT_DOUBLE_EQ(micro.all.cer, 10.0 / 13);
  const EditReport macro = acc.report(true);
  EXPECT_DOUBLE_EQ(macro.all.cer, (1.0 / 3 + 9.0 / 10) / 2);
  EXPECT_NE(micro.all.cer, macro.all.cer);
}

TEST(EditAccumulator, MixedCountsOnlyTowardAll) {
  EditAccumulator acc;
  acc.add("la", "et", "et");
  acc.add("fro", "et", "e");
  acc.add(kMixedLanguage, "ab cd", "ab ce");
  const EditReport r = acc.report();
  EXPECT_EQ(r.all.samples, 3u);
  EXPECT_EQ(r.per_language.size(), 2u);
  EXPECT_EQ(r.per_language.count(kMixedLanguage), 0u);
  EXPECT_EQ(r.per_language.at("la").cer, 0.0);
  EXPECT_DOUBLE_EQ(r.per_language.at("fro").cer, 1.0);
  EXPECT_DOUBLE_EQ(r.all.cer, 2.0 / 8);
}

TEST(EditAccumulator, MergeEqualsSequential) {
  std::mt19937_64 rng(32);
  EditAccumulator whole, a, b;
  for (int i = 0; i < 200; ++i) {
    const std::string g = to_utf8(testing_util::random_words(rng, 5 + testing_util::below(rng, 40)));
    const std::string p = to_utf8(testing_util::add_noise(rng, to_u32(g), 0.2, U"abc "));
    const std::string lang = i % 3 ? "la" : "fro";
    whole.add(lang, p, g);
    (i % 2 ? a : b).add(lang, p, g);
  }
  a.merge(b);
  for (bool macro : {false, true}) {
    const auto x = whole.report(macro), y = a.report(macro);
    EXPECT_EQ(x.all.samples, y.all.samples);
    EXPECT_NEAR(x.all.cer, y.all.cer, 1e-12);
    EXPECT_NEAR(x.all.wer, y.all.wer, 1e-12);
    EXPECT_NEAR(x.per_language.at("fro").cer, y.per_language.at("fro").cer, 1e-12);
  }
}

TEST(Bow, WorkedExample) {
  const BowReport r = bow(Labels{"a", "a", "b"}, Labels{"a", "b", "b"});
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.precision, 2.0 / 3);
  EXPECT_EQ(r.recall, 2.0 / 3);
  EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3);
}

TEST(Bow, DegenerateCases) {
  const BowReport same = bow(Labels{"x", "y"}, Labels{"y", "x"});
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);
  const BowReport disjoint = bow(Labels{"x"}, Labels{"y"});
  EXPECT_EQ(disjoint.precision, 0.0);
  EXPECT_EQ(disjoint.recall, 0.0);
  EXPECT_EQ(disjoint.f1, 0.0);
  const BowReport empty = bow(Labels{}, Labels{});
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.recall, 0.0);
}

TEST(Bow, MatchesMultisetCountingAndIsSymmetric) {
  std::mt19937_64 rng(33);
  const Labels vocab = {"NOUN", "VERB", "DET", "ADP", "ADJ", "PUNCT", "PRON"};
  for (int trial = 0; trial < 1000; ++trial) {
    Labels g, p;
    for (std::size_t i = testing_util::below(rng, 40); i > 0; --i) {
      g.push_back(vocab[testing_util::below(rng, vocab.size())]);
    }
    for (std::size_t i = testing_util::below(rng, 40); i > 0; --i) {
      p.push_back(vocab[testing_util::below(rng, vocab.size())]);
    }
    const BowReport r = bow(g, p);
    ASSERT_EQ(r.tp, oracle::multiset_overlap(g, p));
    EXPECT_LE(r.tp, std::min(g.size(), p.size()));
    const BowReport swapped = bow(p, g);
    EXPECT_EQ(r.precision, swapped.recall);
    EXPECT_EQ(r.recall, swapped.precision);
    Labels shuffled = p;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(bow(g, shuffled), r);
  }
}

TEST(BowMfw, LargeKEqualsPlainBowOnStrippedInput) {
  const Labels g = {"et", "dixit,", "et", "ad", "eos", "."};
  const Labels p = {"et", "dixit", "ad", ";", "ad"};
  EXPECT_EQ(bow_mfw(g, p, 1000), bow(strip_punctuation(g), strip_punctuation(p)));
  // Prediction tokens outside the gold vocabulary are dropped by the
  // restriction even when k covers the whole vocabulary.
  const BowReport r = bow_mfw(g, Labels{"et", "illos"}, 1000);
  EXPECT_EQ(r.pred, 1u);
  EXPECT_EQ(r.precision, 1.0);
}

TEST(BowMfw, DisjointPrediction) {
  const BowReport r = bow_mfw(Labels{"et", "et", "et"}, Labels{"ad", "in"}, 5);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
}

TEST(BowMfw, HandCountedFiveTokenVocabulary) {
  // Gold counts: a5 b4 c3 d3 e2 f1; k=3 keeps a, b, and c (c beats d on the tie).
  Labels g;
  for (auto [tok, n] : std::vector<std::pair<std::string, int>>{
           {"a", 5}, {"b", 4}, {"d", 3}, {"c", 3}, {"e", 2}, {"f", 1}}) {
    g.insert(g.end(), n, tok);
  }
  EXPECT_EQ(most_frequent(g, 3), (Labels{"a", "b", "c"}));
  // Pred: a3 b6 c0 d3 f2 -> restricted to {a,b,c}: a3 b6.
  Labels p;
  p.insert(p.end(), 3, "a");
  p.insert(p.end(), 6, "b");
  p.insert(p.end(), 3, "d");
  p.insert(p.end(), 2, "f");
  const BowReport r = bow_mfw(g, p, 3);
  EXPECT_EQ(r.gold, 12u);  // 5 + 4 + 3
  EXPECT_EQ(r.pred, 9u);
  EXPECT_EQ(r.tp, 7u);  // min(5,3) + min(4,6) + min(3,0)
  EXPECT_DOUBLE_EQ(r.precision, 7.0 / 9);
  EXPECT_DOUBLE_EQ(r.recall, 7.0 / 12);
  EXPECT_THROW(bow_mfw(g, p, 0), Error);
}

TEST(LabelNgrams, Examples) {
  EXPECT_EQ(label_ngrams(Labels{"a", "b", "c", "d", "e"}, 3).size(), 3u);
  EXPECT_TRUE(label_ngrams(Labels{"a", "b"}, 3).empty());
  const auto g = label_ngrams(Labels{"DET", "NOUN", "VERB", "NOUN"}, 3);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0], (Labels{"DET", "NOUN", "VERB"}));
  EXPECT_EQ(g[1], (Labels{"NOUN", "VERB", "NOUN"}));
  EXPECT_THROW(label_ngrams(Labels{"a"}, 0), Error);
}

TEST(Percent, OneDecimal) {
  EXPECT_EQ(percent(0.2051), "20.5");
  EXPECT_EQ(percent(1.399), "139.9");
  EXPECT_EQ(percent(0.0), "0.0");
}

TEST(Evaluate, LayersAndLanguages) {
  std::vector<EvalRecord> recs;
  EvalRecord a{"1", "et dixit", "et dixit", "la", {}};
  a.labels["pos"] = {{"CCONJ", "VERB"}, {"CCONJ", "VERB"}};
  EvalRecord b{"2", "e dist", "et dist", "fro", {}};
  b.labels["pos"] = {{"CCONJ", "VERB"}, {"CCONJ", "NOUN"}};
  EvalRecord c{"3", "ad eos", "ad illos", kMixedLanguage, {}};
  recs = {a, b, c};
  const EvalReport r = evaluate(recs);
  EXPECT_EQ(r.edit.all.samples, 3u);
  EXPECT_DOUBLE_EQ(r.edit.all.cer, (0.0 + 1 + 3) / (8 + 6 + 6));
  EXPECT_EQ(r.bow.at("token").tp, 4u);  // et dixit, dist, ad
  EXPECT_EQ(r.bow.at("pos").tp, 3u);
  EXPECT_EQ(r.bow.count("pos-3gram"), 1u);
  EXPECT_EQ(r.bow_per_language.count(kMixedLanguage), 0u);
  EXPECT_EQ(r.bow_per_language.at("fro").at("token").tp, 1u);
  EXPECT_EQ(r.bow.at("token-mfw").tp, 4u);
}

}  // namespace
}  // namespace pen

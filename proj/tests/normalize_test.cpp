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

#include "pen/normalize.hpp"

#include <gtest/gtest.h>

#include <random>

#include "pen/external.hpp"
#include "random_text.hpp"

namespace pen {
namespace {

std::string norm(const std::string& text, const std::string& lang = "la") {
  return normalize_rules(text, RuleSet::defaults(), lang).text;
}

std::string nfd(const std::string& s) { return canonical_decompose_utf8(s); }

TEST(RuleSet, DataFileMatchesEmbeddedDefault) {
  const RuleSet from_file = RuleSet::load(std::string(PEN_DATA_DIR) + "/rules.tsv");
  EXPECT_TRUE(from_file.same_content(RuleSet::defaults()));
  EXPECT_GT(from_file.rules().size(), 20u);
}

TEST(RuleSet, ParsesEscapesAndContexts) {
  const RuleSet s = RuleSet::parse(
      "# pen-rules 1\n\\u0303\tn\tinitial&before=[bp]&after=letter\tla\t3\n");
  ASSERT_EQ(s.rules().size(), 1u);
  const NormalizationRule& r = s.rules()[0];
  EXPECT_EQ(r.pattern, U"̃");
  EXPECT_TRUE(r.context.initial);
  EXPECT_FALSE(r.context.final);
  EXPECT_EQ(r.context.before->chars, U"bp");
  EXPECT_TRUE(r.context.after->letter);
  EXPECT_EQ(r.language, "la");
  EXPECT_EQ(r.priority, 3);
}

TEST(RuleSet, RejectsMalformedTables) {
  EXPECT_THROW(RuleSet::parse("ꝰ\tus\tany\t*\t0\n"), Error);  // no header
  EXPECT_THROW(RuleSet::parse("# pen-rules 2\n"), Error);
  EXPECT_THROW(RuleSet::parse("# pen-rules 1\nꝰ\tus\tany\t*\n"), Error);
  EXPECT_THROW(RuleSet::parse("# pen-rules 1\nꝰ\tus\tsomewhere\t*\t0\n"), Error);
  EXPECT_THROW(RuleSet::parse("# pen-rules 1\n\\u03\tus\tany\t*\t0\n"), Error);
}

ErrorKind load_error(const std::string& table) {
  try {
    RuleSet::parse(table);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInvalidArgument;  // "did not throw"
}

TEST(RuleSet, ConflictsAreRejectedAtLoad) {
  // Same pattern, same priority, overlapping language scope.
  EXPECT_EQ(load_error("# pen-rules 1\nꝰ\tus\tany\t*\t0\nꝰ\tos\tfinal\tla\t0\n"),
            ErrorKind::kRuleConflict);
  EXPECT_EQ(load_error("# pen-rules 1\nꝰ\tus\tany\tla\t0\nꝰ\tos\tany\tla\t0\n"),
            ErrorKind::kRuleConflict);
  // A rule may not add or drop punctuation.
  EXPECT_EQ(load_error("# pen-rules 1\n.\t\tany\t*\t0\n"), ErrorKind::kRuleConflict);
  EXPECT_EQ(load_error("# pen-rules 1\nꝰ\tus.\tany\t*\t0\n"), ErrorKind::kRuleConflict);
  // A replacement that re-creates a pattern could rewrite forever.
  EXPECT_EQ(load_error("# pen-rules 1\nꝰ\taꝰ\tany\t*\t0\n"), ErrorKind::kRuleConflict);
  // Disjoint languages or different priorities are fine.
  EXPECT_NO_THROW(RuleSet::parse("# pen-rules 1\nꝰ\tus\tany\tla\t0\nꝰ\tos\tany\tfro\t0\n"));
  EXPECT_NO_THROW(RuleSet::parse("# pen-rules 1\nꝰ\tus\tany\t*\t0\nꝰ\tos\tfinal\t*\t1\n"));
  // The Tironian et is a marker, not punctuation, so expanding it is allowed.
  EXPECT_NO_THROW(RuleSet::parse("# pen-rules 1\n⁊\tet\tany\t*\t0\n"));
}

TEST(RuleNormalizer, RequiredExamples) {
  EXPECT_EQ(norm("cõsul"), "consul");
  EXPECT_EQ(norm("młt", "fro"), "molt");
  EXPECT_EQ(norm("voꝰ", "fro"), "vous");
  EXPECT_EQ(norm("uie", "fro"), "vie");
  EXPECT_EQ(norm("q̃"), "que");
  EXPECT_EQ(norm("xiiij"), "xiiij");
}

TEST(RuleNormalizer, ContextsChooseTheExpansion) {
  EXPECT_EQ(norm("cõmunis"), "communis");
  EXPECT_EQ(norm("tēpus"), "tempus");
  EXPECT_EQ(norm("ꝯtra"), "contra");
  EXPECT_EQ(norm("ꝯpleo"), "compleo");
  EXPECT_EQ(norm("9tra"), "contra");
  EXPECT_EQ(norm("9pleo"), "compleo");
  EXPECT_EQ(norm("anno 19a"), "anno 19a");  // not word-initial
  EXPECT_EQ(norm("omnibꝫ"), "omnibus");
  EXPECT_EQ(norm("sedꝫ"), "sedet");
  EXPECT_EQ(norm("⁊ dixit"), "et dixit");
  EXPECT_EQ(norm("qͥ qͣ qͦ"), "qui qua quo");
  EXPECT_EQ(norm("ꝑ ꝓ"), "per pro");
  // ł alone is "vel" in Latin and "ol" elsewhere.
  EXPECT_EQ(norm("hoc ł illud", "la"), "hoc vel illud");
  EXPECT_EQ(norm("hoc ł illud", "fro"), "hoc ol illud");
}

TEST(RuleNormalizer, ExpansionReachesAFixpoint) {
  // 9 needs a following letter; ⁊ and a bare mark only become letters in
  // the first round, so the second round expands 9.
  EXPECT_EQ(norm("9⁊"), "conet");
  EXPECT_EQ(norm("9̃"), "conn");
}

TEST(RuleNormalizer, RamistRegularization) {
  EXPECT_EQ(norm("iam"), "jam");
  EXPECT_EQ(norm("nouus"), "novus");
  EXPECT_EQ(norm("iuuenis"), "juvenis");
  EXPECT_EQ(norm("vt"), "ut");
  EXPECT_EQ(norm("vnus"), "unus");
  EXPECT_EQ(norm("filij"), "filii");
  EXPECT_EQ(norm("auis"), "avis");
  EXPECT_EQ(norm("Uita"), "Vita");
  EXPECT_EQ(norm("IAM"), "JAM");
  EXPECT_EQ(norm("eius"), "eius");
  EXPECT_EQ(norm("iis"), "iis");  // exception list
}

TEST(RuleNormalizer, NumeralsPassThrough) {
  EXPECT_EQ(norm(".xiiij. dies"), ".xiiij. dies");
  EXPECT_EQ(norm("anno .mcccc. et"), "anno .mcccc. et");
  EXPECT_EQ(norm("dixit. xiiij"), "dixit. xiiij");  // not capitalized
  EXPECT_TRUE(is_numeral_token(U"xiiij"));
  EXPECT_TRUE(is_numeral_token(U".MCCCCXC."));
  EXPECT_TRUE(is_numeral_token(U"1490"));
  EXPECT_FALSE(is_numeral_token(U"illi"));
  EXPECT_FALSE(is_numeral_token(U"vix"));
  EXPECT_FALSE(is_numeral_token(U"dic"));
  EXPECT_FALSE(is_numeral_token(U"..."));
}

TEST(RuleNormalizer, Capitalization) {
  EXPECT_EQ(norm("dixit. et uenit"), "dixit. Et venit");
  EXPECT_EQ(norm("quid? non"), "quid? Non");
  EXPECT_EQ(norm("dixit.\" et"), "dixit.\" Et");
  EXPECT_EQ(norm("S. dixit"), "S. dixit");  // initial
  EXPECT_EQ(norm(".xx. anni"), ".xx. anni");  // numeral
  EXPECT_EQ(norm("dixit, et"), "dixit, et");
  EXPECT_EQ(norm("ad maria et petrus"), "ad Maria et Petrus");
  EXPECT_EQ(norm("iesus"), "Jesus");
  const RuleNormalizer lower(RuleSet::defaults(), false);
  EXPECT_EQ(lower.normalize("dixit. et", "la").text, "dixit. et");
}

TEST(RuleNormalizer, OutputIsDecomposed) {
  EXPECT_EQ(norm("é"), nfd("é"));
  EXPECT_EQ(norm("ẽt"), "ent");
}

TEST(RuleNormalizer, ProvenanceForOneExpansion) {
  const NormalizerResult r = normalize_rules("cõsul", RuleSet::defaults(), "la");
  // Input is c o U+0303 s u l; the tilde becomes n.
  ASSERT_EQ(r.spans.size(), 6u);
  EXPECT_EQ(r.spans[2].input, (Span{2, 3}));
  EXPECT_EQ(r.spans[2].output, (Span{2, 3}));
  EXPECT_GE(r.spans[2].rule, 0);
  EXPECT_EQ(r.spans[0].rule, -1);
  ASSERT_EQ(r.applied_rules.size(), 1u);
  EXPECT_EQ(to_utf8(RuleSet::defaults().rules()[r.applied_rules[0].rule].replacement),
            "n");
  const NormalizerResult q = normalize_rules("a q̃ b", RuleSet::defaults(), "la");
  // q + U+0303 (2 code points) -> "que" (3).
  bool found = false;
  for (const auto& l : q.spans) {
    if (l.input == Span{2, 4}) {
      EXPECT_EQ(l.output, (Span{2, 5}));
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

// Links tile input and output, in order, on arbitrary marker-heavy text.
TEST(RuleNormalizer, ProvenanceTilesBothTexts) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::string in = to_utf8(testing_util::random_marker_string(rng, 1 + trial % 12));
    const NormalizerResult r = normalize_rules(in, RuleSet::defaults(), "la");
    const std::size_t n_in = canonical_decompose(to_u32(in)).size();
    const std::size_t n_out = to_u32(r.text).size();
    std::size_t i = 0, o = 0;
    for (const ProvenanceLink& l : r.spans) {
      ASSERT_EQ(l.input.begin, i) << in;
      ASSERT_EQ(l.output.begin, o) << in;
      ASSERT_LT(l.input.begin, l.input.end) << in;
      i = l.input.end;
      o = l.output.end;
    }
    EXPECT_EQ(i, n_in) << in;
    EXPECT_EQ(o, n_out) << in;
  }
}

TEST(RuleNormalizer, IdempotentAndPunctuationPreserving) {
  std::mt19937_64 rng(22);
  const MarkerTable& markers = MarkerTable::defaults();
  for (int trial = 0; trial < 3000; ++trial) {
    const std::string in = to_utf8(testing_util::random_marker_string(rng, 1 + trial % 15));
    for (const char* lang : {"la", "fro"}) {
      const std::string once = norm(in, lang);
      ASSERT_EQ(norm(once, lang), once) << in;
      ASSERT_EQ(punctuation_multiset(to_u32(once), markers),
                punctuation_multiset(canonical_decompose(to_u32(in)), markers))
          << in;
    }
  }
}

// Tokens with no marker and no u/v/i/j are untouched; with capitalization on,
// only a token's first letter may change case.
TEST(RuleNormalizer, PlainTokensAreUntouched) {
  std::mt19937_64 rng(23);
  const std::u32string plain = U"abcdefghklmnopqrstxyz";
  const RuleNormalizer no_caps(RuleSet::defaults(), false);
  for (int trial = 0; trial < 500; ++trial) {
    std::u32string text;
    const std::size_t words = 1 + testing_util::below(rng, 10);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) text += testing_util::below(rng, 3) ? U" " : U". ";
      text += testing_util::random_string(rng, 1 + testing_util::below(rng, 6), plain);
    }
    const std::string in = to_utf8(text);
    EXPECT_EQ(no_caps.normalize(in, "la").text, in);
    const std::u32string out = to_u32(norm(in));
    ASSERT_EQ(out.size(), text.size());
    for (std::size_t k = 0; k < text.size(); ++k) {
      if (out[k] == text[k]) continue;
      const bool word_start = k == 0 || text[k - 1] == U' ';
      EXPECT_TRUE(word_start && out[k] == to_upper(text[k])) << in;
    }
  }
}

TEST(TaskCheck, IdentityNeverFlagged) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::string in = to_utf8(testing_util::random_marker_string(rng, 1 + trial % 15));
    EXPECT_TRUE(validate_against_task(in, in).empty()) << in;
  }
  EXPECT_TRUE(validate_against_task("młt", "młt").empty());
}

TEST(TaskCheck, RuleNormalizerOutputIsClean) {
  const std::string src = "S. Paulus dixit. anno .xiiij. ⁊ cõsul uenit, 1490";
  const NormalizerResult r = normalize_rules(src, RuleSet::defaults(), "la");
  EXPECT_TRUE(validate_against_task(r, src).empty()) << r.text;
}

TEST(TaskCheck, FlagsEachViolationKind) {
  auto kinds = [](const std::string& out, const std::string& src) {
    std::vector<ViolationKind> k;
    for (const Violation& v : validate_against_task(out, src)) k.push_back(v.kind);
    return k;
  };
  using K = ViolationKind;
  EXPECT_EQ(kinds("dixit, et", "dixit et"), std::vector<K>{K::kPunctuationAdded});
  EXPECT_EQ(kinds("dixit et", "dixit. et"), std::vector<K>{K::kPunctuationRemoved});
  EXPECT_EQ(kinds("anno xiiii", "anno xiiij"), std::vector<K>{K::kNumeralAltered});
  EXPECT_EQ(kinds("anno 1491", "anno 1490"), std::vector<K>{K::kNumeralAltered});
  EXPECT_EQ(kinds("Sanctus Paulus", "S. Paulus"),
            (std::vector<K>{K::kPunctuationRemoved, K::kInitialExpanded}));
  EXPECT_EQ(kinds("abcdefghijklm", "abcd"), std::vector<K>{K::kLengthRatio});
  EXPECT_EQ(kinds("abcdefghijkl", "abcd"), std::vector<K>{});  // exactly 3x
  EXPECT_EQ(kinds("moult", "młt"), std::vector<K>{K::kAmbiguousForm});
  // Whole-token moves are fine as long as order holds.
  EXPECT_EQ(kinds("et .xx. et", "⁊ .xx. ⁊"), std::vector<K>{});
}

// --- external endpoints ----------------------------------------------------

ExternalEndpoint subprocess(const std::string& mode, int sleep_ms = 0) {
  ExternalEndpoint ep;
  ep.command = {PEN_ECHO_ENDPOINT, mode, std::to_string(sleep_ms)};
  ep.timeout_ms = 2000;
  ep.concurrency = 4;
  return ep;
}

std::vector<ExternalInput> inputs(std::size_t n) {
  std::vector<ExternalInput> in;
  for (std::size_t i = 0; i < n; ++i) {
    in.push_back({"p" + std::to_string(i), "cõsul " + std::to_string(i), "la"});
  }
  return in;
}

ErrorKind external_error(const std::vector<ExternalInput>& in, const ExternalEndpoint& ep,
                         std::string* message = nullptr) {
  try {
    normalize_external(in, ep);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  return ErrorKind::kInvalidArgument;
}

TEST(External, SubprocessEchoKeepsOrder) {
  for (const char* mode : {"echo", "swap"}) {
    const auto in = inputs(9);
    const auto out = normalize_external(in, subprocess(mode));
    ASSERT_EQ(out.size(), in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      EXPECT_EQ(out[i].text, nfd(in[i].text)) << mode;
      EXPECT_TRUE(out[i].opaque);
      ASSERT_EQ(out[i].spans.size(), 1u);
      EXPECT_EQ(out[i].spans[0].input, (Span{0, to_u32(nfd(in[i].text)).size()}));
      EXPECT_TRUE(out[i].warnings.empty());
    }
  }
  const auto upper = normalize_external("et cum", "la", subprocess("upper"));
  EXPECT_EQ(upper.text, "ET CUM");
}

TEST(External, EmptyOutputIsAWarningNotAnError) {
  const auto out = normalize_external(inputs(3), subprocess("empty"));
  for (const auto& r : out) {
    EXPECT_EQ(r.text, "");
    EXPECT_EQ(r.warnings, std::vector<std::string>{"empty-output"});
  }
}

TEST(External, SubprocessFailuresCarryTheInputId) {
  std::string msg;
  EXPECT_EQ(external_error(inputs(3), subprocess("crash"), &msg),
            ErrorKind::kEndpointFailure);
  EXPECT_NE(msg.find("p0"), std::string::npos) << msg;
  EXPECT_EQ(external_error(inputs(3), subprocess("badjson")), ErrorKind::kEndpointFailure);
  ExternalEndpoint missing;
  missing.command = {"/nonexistent/pen-normalizer"};
  EXPECT_EQ(external_error(inputs(1), missing), ErrorKind::kEndpointFailure);
  ExternalEndpoint slow = subprocess("silent");
  slow.timeout_ms = 200;
  EXPECT_EQ(external_error(inputs(2), slow, &msg), ErrorKind::kTimeout);
  EXPECT_NE(msg.find("p0"), std::string::npos) << msg;
}

class HttpEndpoint : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/normalize", [this](const httplib::Request& req, httplib::Response& res) {
      const auto j = nlohmann::json::parse(req.body);
      const std::string id = j["id"];
      const int n = std::stoi(id.substr(1));
      ++calls_;
      if (mode_ == "fail") {
        res.status = 500;
        return;
      }
      // Later inputs answer sooner, so completion order differs from input order.
      std::this_thread::sleep_for(std::chrono::milliseconds(mode_ == "slow" ? 1000 : (10 - n % 10) * 3));
      res.set_content(nlohmann::json{{"id", id}, {"text", j["text"]}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  ExternalEndpoint endpoint() const {
    ExternalEndpoint ep;
    ep.kind = ExternalEndpoint::Kind::kHttp;
    ep.url = "http://127.0.0.1:" + std::to_string(port_) + "/normalize";
    ep.timeout_ms = 3000;
    ep.concurrency = 4;
    return ep;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::string mode_ = "echo";
  std::atomic<int> calls_{0};
};

TEST_F(HttpEndpoint, EchoKeepsInputOrder) {
  const auto in = inputs(20);
  const auto out = normalize_external(in, endpoint());
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i].text, nfd(in[i].text));
  EXPECT_EQ(calls_, 20);
}

TEST_F(HttpEndpoint, ServerErrorIsEndpointFailure) {
  mode_ = "fail";
  std::string msg;
  EXPECT_EQ(external_error(inputs(3), endpoint(), &msg), ErrorKind::kEndpointFailure);
  EXPECT_NE(msg.find("HTTP 500"), std::string::npos) << msg;
}

TEST_F(HttpEndpoint, SlowServerTimesOut) {
  mode_ = "slow";
  ExternalEndpoint ep = endpoint();
  ep.timeout_ms = 200;
  EXPECT_EQ(external_error(inputs(1), ep), ErrorKind::kTimeout);
}

TEST(External, UnreachableHttpIsEndpointFailure) {
  ExternalEndpoint ep;
  ep.kind = ExternalEndpoint::Kind::kHttp;
  ep.url = "http://127.0.0.1:1/normalize";
  ep.timeout_ms = 1000;
  EXPECT_EQ(external_error(inputs(1), ep), ErrorKind::kEndpointFailure);
}

}  // namespace
}  // namespace pen

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

#include "pen/review.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <thread>

namespace pen {
namespace {

namespace fs = std::filesystem;

std::string fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("pen-review-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p.string();
}

AlignedPair make_pair(const std::string& work, int k) {
  AlignedPair p;
  p.lineage = {"ms1", "f" + std::to_string(k) + "r", work, "p" + std::to_string(k), {0, 5}, {0, 6}};
  p.id = "ms1/f" + std::to_string(k) + "r:" + work + "#p" + std::to_string(k) + ":0-5";
  p.src = "cõsul " + std::to_string(k);
  p.tgt = "consul " + std::to_string(k);
  p.src_bytes = p.src.size();
  p.language = "la";
  p.ops = "2M1S4M";
  return p;
}

std::vector<AlignedPair> make_pairs(const std::map<std::string, int>& per_work) {
  std::vector<AlignedPair> out;
  int k = 0;
  for (const auto& [work, n] : per_work) {
    for (int i = 0; i < n; ++i) out.push_back(make_pair(work, k++));
  }
  return out;
}

TEST(ReviewStore, PendingAcceptAndEdit) {
  const std::string dir = fresh_dir("basic");
  ReviewStore store(dir);
  const auto pairs = make_pairs({{"w1", 3}, {"w2", 2}});
  store.add_pending(pairs);
  EXPECT_EQ(store.list(ReviewStatus::kPending).size(), 5u);

  store.decide(pairs[0].id, ReviewStatus::kAccepted, "ann");
  EXPECT_EQ(store.list(ReviewStatus::kPending).size(), 4u);

  store.decide(pairs[1].id, ReviewStatus::kEdited, "ann", std::nullopt, "vie", "fixed u/v");
  const auto edited = store.get(pairs[1].id);
  ASSERT_TRUE(edited);
  EXPECT_EQ(edited->status, ReviewStatus::kEdited);
  EXPECT_EQ(edited->tgt, "vie");
  EXPECT_EQ(edited->src, pairs[1].src);
  EXPECT_EQ(edited->pair.tgt, pairs[1].tgt);  // original kept
  EXPECT_EQ(*edited->notes, "fixed u/v");

  store.decide(pairs[2].id, ReviewStatus::kRejected, "ann", std::nullopt, std::nullopt,
               "wrong work aligned");
  const ReviewStats s = store.stats();
  EXPECT_EQ(s.total, 5u);
  EXPECT_EQ(s.decisions, 3u);
  EXPECT_EQ(s.by_status.at("pending"), 2u);
  EXPECT_EQ(s.by_status.at("accepted"), 1u);
  EXPECT_EQ(s.by_status.at("edited"), 1u);
  EXPECT_EQ(s.by_status.at("rejected"), 1u);
  EXPECT_EQ(*store.get(pairs[2].id)->notes, "wrong work aligned");
}

ErrorKind decide_error(ReviewStore& store, const std::string& id, ReviewStatus status,
                       const std::string& annotator, std::optional<std::string> tgt,
                       std::optional<ReviewStatus> expected = std::nullopt) {
  try {
    store.decide(id, status, annotator, std::nullopt, tgt, std::nullopt, expected);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kFormatError;  // "did not throw"
}

TEST(ReviewStore, RejectsBadDecisions) {
  ReviewStore store(fresh_dir("bad"));
  const auto pairs = make_pairs({{"w1", 1}});
  store.add_pending(pairs);
  const std::string id = pairs[0].id;
  EXPECT_EQ(decide_error(store, "nope", ReviewStatus::kAccepted, "a", {}), ErrorKind::kNotFound);
  EXPECT_EQ(decide_error(store, id, ReviewStatus::kEdited, "a", {}), ErrorKind::kInvalidArgument);
  EXPECT_EQ(decide_error(store, id, ReviewStatus::kAccepted, "a", "x"), ErrorKind::kInvalidArgument);
  EXPECT_EQ(decide_error(store, id, ReviewStatus::kPending, "a", {}), ErrorKind::kInvalidArgument);
  EXPECT_EQ(decide_error(store, id, ReviewStatus::kAccepted, "", {}), ErrorKind::kInvalidArgument);
  EXPECT_EQ(store.stats().decisions, 0u);
  // Stale expected status.
  store.decide(id, ReviewStatus::kAccepted, "a");
  EXPECT_EQ(decide_error(store, id, ReviewStatus::kRejected, "b", {}, ReviewStatus::kPending),
            ErrorKind::kConflict);
  EXPECT_NO_THROW(store.decide(id, ReviewStatus::kRejected, "b", std::nullopt, std::nullopt,
                               std::nullopt, ReviewStatus::kAccepted));
  EXPECT_THROW(store.add_pending({pairs[0]}), Error);  // duplicate id
}

TEST(ReviewStore, ReopenReplaysTheLog) {
  const std::string dir = fresh_dir("reopen");
  std::vector<ReviewItem> live;
  {
    ReviewStore store(dir);
    const auto pairs = make_pairs({{"w1", 4}});
    store.add_pending(pairs);
    store.decide(pairs[0].id, ReviewStatus::kEdited, "a", "cosul", "consul");
    store.decide(pairs[0].id, ReviewStatus::kAccepted, "b");
    store.decide(pairs[3].id, ReviewStatus::kRejected, "a");
    live = store.snapshot();
  }
  ReviewStore reopened(dir);
  EXPECT_EQ(reopened.snapshot(), live);
  EXPECT_EQ(reopened.stats().decisions, 3u);
  // A later accept keeps the earlier edit.
  EXPECT_EQ(reopened.get(live[0].pair.id)->src, "cosul");
  EXPECT_EQ(reopened.get(live[0].pair.id)->status, ReviewStatus::kAccepted);
}

TEST(ReviewStore, RandomDecisionsReplayExactly) {
  const std::string dir = fresh_dir("random");
  ReviewStore store(dir);
  const auto pairs = make_pairs({{"w1", 30}, {"w2", 20}, {"w3", 10}});
  store.add_pending(pairs);
  std::mt19937_64 rng(41);
  for (int i = 0; i < 300; ++i) {
    const auto& p = pairs[rng() % pairs.size()];
    switch (rng() % 3) {
      case 0: store.decide(p.id, ReviewStatus::kAccepted, "a"); break;
      case 1: store.decide(p.id, ReviewStatus::kRejected, "b", {}, {}, "n" + std::to_string(i)); break;
      default: store.decide(p.id, ReviewStatus::kEdited, "c", {}, "t" + std::to_string(i)); break;
    }
  }
  EXPECT_EQ(ReviewStore::replay_items(dir), store.snapshot());
}

TEST(ReviewStore, CorruptLogRefusesToOpen) {
  auto corrupted = [](const std::string& name, const std::string& extra_line) {
    const std::string dir = fresh_dir(name);
    {
      ReviewStore store(dir);
      const auto pairs = make_pairs({{"w1", 2}});
      store.add_pending(pairs);
      store.decide(pairs[0].id, ReviewStatus::kAccepted, "a");
    }
    std::ofstream(dir + "/decisions.jsonl", std::ios::app) << extra_line << "\n";
    try {
      ReviewStore again(dir);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kFormatError;
  };
  EXPECT_EQ(corrupted("c1", "{not json"), ErrorKind::kStoreCorruption);
  EXPECT_EQ(corrupted("c2", R"({"seq":2,"pair_id":"ghost","status":"accepted","annotator":"a"})"),
            ErrorKind::kStoreCorruption);
  EXPECT_EQ(corrupted("c3", R"({"seq":5,"pair_id":"x","status":"accepted","annotator":"a"})"),
            ErrorKind::kStoreCorruption);
  EXPECT_EQ(corrupted("c4", R"({"seq":2,"pair_id":"x","status":"maybe","annotator":"a"})"),
            ErrorKind::kStoreCorruption);
}

TEST(ReviewStore, DecisionIsOnDiskBeforeReturn) {
  const std::string dir = fresh_dir("durable");
  ReviewStore store(dir);
  const auto pairs = make_pairs({{"w1", 1}});
  store.add_pending(pairs);
  store.decide(pairs[0].id, ReviewStatus::kAccepted, "a");
  std::ifstream in(dir + "/decisions.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  const Json j = Json::parse(line);
  EXPECT_EQ(j["pair_id"], pairs[0].id);
  EXPECT_EQ(j["status"], "accepted");
  EXPECT_EQ(j["seq"], 1);
  EXPECT_EQ(j["timestamp"].get<std::string>().back(), 'Z');
}

TEST(SampleGold, UniformCaps) {
  const auto pairs = make_pairs({{"a", 10}, {"b", 3}, {"c", 7}});
  SampleSpec spec;
  spec.cap = 5;
  const auto batch = sample_gold(pairs, spec);
  const auto counts = stratum_counts(batch);
  EXPECT_EQ(counts.at("a"), 5u);
  EXPECT_EQ(counts.at("b"), 3u);  // whole stratum when smaller than the cap
  EXPECT_EQ(counts.at("c"), 5u);
  spec.cap = 100;
  EXPECT_EQ(sample_gold(pairs, spec).size(), pairs.size());
  EXPECT_THROW(sample_gold({}, spec), Error);
}

TEST(SampleGold, SeededAndOrderFree) {
  auto pairs = make_pairs({{"a", 40}, {"b", 40}});
  SampleSpec spec;
  spec.cap = 10;
  spec.seed = 7;
  const auto x = sample_gold(pairs, spec);
  std::reverse(pairs.begin(), pairs.end());
  EXPECT_EQ(sample_gold(pairs, spec), x);
  spec.seed = 8;
  EXPECT_NE(sample_gold(pairs, spec), x);
}

TEST(SampleGold, ProportionalLargestRemainder) {
  const auto pairs = make_pairs({{"a", 5}, {"b", 3}, {"c", 2}});
  SampleSpec spec;
  spec.strategy = SampleSpec::Strategy::kProportional;
  spec.total = 4;  // exact shares 2.0, 1.2, 0.8 -> 2, 1, 1
  const auto counts = stratum_counts(sample_gold(pairs, spec));
  EXPECT_EQ(counts.at("a"), 2u);
  EXPECT_EQ(counts.at("b"), 1u);
  EXPECT_EQ(counts.at("c"), 1u);
}

// One dominant work ends up with 75 of 588 pairs, the imbalance a
// representative sample inherits from a skewed corpus.
TEST(SampleGold, OverrepresentedWorkInA588Batch) {
  std::map<std::string, int> sizes = {{"oresme", 750}};
  for (int w = 0; w < 19; ++w) sizes["work" + std::to_string(100 + w)] = 270;
  const auto pairs = make_pairs(sizes);  // 750 + 19*270 = 5880
  SampleSpec spec;
  spec.strategy = SampleSpec::Strategy::kProportional;
  spec.total = 588;
  spec.seed = 3;
  const auto batch = sample_gold(pairs, spec);
  EXPECT_EQ(batch.size(), 588u);
  const auto counts = stratum_counts(batch);
  EXPECT_EQ(counts.at("oresme"), 75u);
  std::size_t largest_other = 0;
  for (const auto& [w, n] : counts) {
    if (w != "oresme") largest_other = std::max(largest_other, n);
  }
  EXPECT_EQ(largest_other, 27u);
}

// --- HTTP --------------------------------------------------------------------

std::string encode(const std::string& id) {
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

class ReviewApi : public ::testing::Test {
 protected:
  void start(std::optional<std::string> token = std::nullopt) {
    store_ = std::make_unique<ReviewStore>(fresh_dir("api"));
    pairs_ = make_pairs({{"w1", 3}, {"w2", 2}});
    store_->add_pending(pairs_);
    server_ = std::make_unique<ReviewServer>(*store_, token);
    ASSERT_TRUE(server_->bind("127.0.0.1", 0));
    thread_ = std::thread([this] { server_->serve(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", server_->port());
  }
  void TearDown() override {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
  }
  Json get(const std::string& path, int expect = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return Json::parse(res->body);
  }
  Json post(const std::string& id, const Json& body, int expect = 200) {
    auto res = client_->Post("/api/pairs/" + encode(id) + "/decision", body.dump(),
                             "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << res->body;
    return Json::parse(res->body);
  }

  std::unique_ptr<ReviewStore> store_;
  std::unique_ptr<ReviewServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  std::vector<AlignedPair> pairs_;
};

TEST_F(ReviewApi, PendingAcceptEditRoundTrip) {
  start();
  EXPECT_EQ(get("/api/pairs?status=pending")["count"], 5);
  EXPECT_EQ(get("/api/stats")["pending"], 5);

  post(pairs_[0].id, {{"status", "accepted"}, {"annotator", "ann"}});
  EXPECT_EQ(get("/api/stats")["pending"], 4);
  EXPECT_EQ(get("/api/stats")["accepted"], 1);

  const std::string typed = "vie ⁊ cõsul";
  const Json r = post(pairs_[1].id, {{"status", "edited"},
                                      {"corrected_target", typed},
                                      {"annotator", "ann"},
                                      {"expected_status", "pending"}});
  EXPECT_EQ(r["status"], "edited");
  const Json back = get("/api/pairs/" + encode(pairs_[1].id));
  EXPECT_EQ(back["tgt"].get<std::string>(), typed);  // byte-identical
  EXPECT_EQ(back["status"], "edited");
  EXPECT_EQ(back["original_tgt"], pairs_[1].tgt);
  EXPECT_EQ(back["lineage"]["work_id"], "w1");
  EXPECT_EQ(get("/api/pairs?status=edited")["items"][0]["id"], pairs_[1].id);
}

TEST_F(ReviewApi, ErrorsMapToStatusCodes) {
  start();
  post("missing", {{"status", "accepted"}, {"annotator", "a"}}, 404);
  get("/api/pairs/" + encode("missing"), 404);
  post(pairs_[0].id, {{"status", "bogus"}, {"annotator", "a"}}, 400);
  post(pairs_[0].id, {{"status", "edited"}, {"annotator", "a"}}, 400);
  get("/api/pairs?status=bogus", 400);
  auto res = client_->Post("/api/pairs/" + encode(pairs_[0].id) + "/decision", "{oops",
                           "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  // The UI refuses to submit on a stale status: the server answers 409.
  post(pairs_[0].id, {{"status", "accepted"}, {"annotator", "a"}});
  post(pairs_[0].id,
       {{"status", "rejected"}, {"annotator", "b"}, {"expected_status", "pending"}}, 409);
  EXPECT_EQ(get("/api/stats")["decisions"], 1);
}

TEST_F(ReviewApi, MarkersAreExported) {
  start();
  const Json m = get("/api/markers");
  bool tilde = false;
  for (const auto& r : m["ranges"]) {
    tilde |= r["first"].get<uint32_t>() <= 0x303 && 0x303 <= r["last"].get<uint32_t>();
  }
  EXPECT_TRUE(tilde);
}

TEST_F(ReviewApi, TokenIsEnforced) {
  start("s3cret");
  auto res = client_->Get("/api/stats");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);
  res = client_->Get("/api/stats", {{"X-Review-Token", "s3cret"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
}

TEST_F(ReviewApi, PortInUseIsReported) {
  start();
  ReviewServer second(*store_);
  EXPECT_FALSE(second.bind("127.0.0.1", server_->port()));
}

}  // namespace
}  // namespace pen

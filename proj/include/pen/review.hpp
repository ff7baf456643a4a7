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

// Gold-set curation: a directory-backed review store with an append-only
// decision log, stratified sampling, and the HTTP API the review UI uses.
//
// Store layout:
//   <dir>/pairs.jsonl      pairs under review, in sampling order
//   <dir>/decisions.jsonl  one decision per line, never rewritten
// Current state is always the replay of both files.

#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pen/abbrev.hpp"
#include "pen/error.hpp"
#include "pen/io.hpp"
#include "pen/pairbuilder.hpp"

namespace pen {

enum class ReviewStatus { kPending, kAccepted, kRejected, kEdited };

inline const char* review_status_name(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::kPending: return "pending";
    case ReviewStatus::kAccepted: return "accepted";
    case ReviewStatus::kRejected: return "rejected";
    case ReviewStatus::kEdited: return "edited";
  }
  return "pending";
}

inline std::optional<ReviewStatus> parse_review_status(const std::string& s) {
  if (s == "pending") return ReviewStatus::kPending;
  if (s == "accepted") return ReviewStatus::kAccepted;
  if (s == "rejected") return ReviewStatus::kRejected;
  if (s == "edited") return ReviewStatus::kEdited;
  return std::nullopt;
}

struct Decision {
  uint64_t seq = 0;  // 1-based position in the log
  std::string pair_id;
  ReviewStatus status = ReviewStatus::kAccepted;
  std::string annotator;
  std::string timestamp;  // UTC, ISO 8601
  std::optional<std::string> corrected_source;
  std::optional<std::string> corrected_target;
  std::optional<std::string> notes;

  bool operator==(const Decision&) const = default;
};

inline void to_json(Json& j, const Decision& d) {
  j = Json{{"seq", d.seq},
           {"pair_id", d.pair_id},
           {"status", review_status_name(d.status)},
           {"annotator", d.annotator},
           {"timestamp", d.timestamp}};
  if (d.corrected_source) j["corrected_source"] = *d.corrected_source;
  if (d.corrected_target) j["corrected_target"] = *d.corrected_target;
  if (d.notes) j["notes"] = *d.notes;
}

inline void from_json(const Json& j, Decision& d) {
  d.seq = detail::required<uint64_t>(j, "seq");
  d.pair_id = detail::required<std::string>(j, "pair_id");
  const auto status = parse_review_status(detail::required<std::string>(j, "status"));
  if (!status || *status == ReviewStatus::kPending) {
    throw Error(ErrorKind::kFormatError, "bad decision status");
  }
  d.status = *status;
  d.annotator = detail::required<std::string>(j, "annotator");
  d.timestamp = detail::optional_field<std::string>(j, "timestamp", "");
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return detail::required<std::string>(j, key);
  };
  d.corrected_source = opt("corrected_source");
  d.corrected_target = opt("corrected_target");
  d.notes = opt("notes");
}

// A pair with its review state folded in.
struct ReviewItem {
  AlignedPair pair;  // as sampled
  ReviewStatus status = ReviewStatus::kPending;
  std::string src;   // current text (edited or original)
  std::string tgt;
  std::optional<std::string> notes;
  std::string annotator;
  uint64_t last_seq = 0;
  std::size_t order = 0;  // sampling order

  bool operator==(const ReviewItem&) const = default;
};

inline void to_json(Json& j, const ReviewItem& it) {
  j = Json{{"id", it.pair.id},
           {"status", review_status_name(it.status)},
           {"src", it.src},
           {"tgt", it.tgt},
           {"original_src", it.pair.src},
           {"original_tgt", it.pair.tgt},
           {"ops", it.pair.ops},
           {"match_rate", it.pair.match_rate},
           {"language", it.pair.language},
           {"lineage", it.pair.lineage},
           {"annotator", it.annotator},
           {"notes", it.notes ? Json(*it.notes) : Json(nullptr)},
           {"order", it.order}};
}

struct ReviewStats {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_status;
  uint64_t decisions = 0;
};

inline void to_json(Json& j, const ReviewStats& s) {
  j = Json{{"total", s.total}, {"decisions", s.decisions}};
  for (const char* name : {"pending", "accepted", "rejected", "edited"}) {
    const auto it = s.by_status.find(name);
    j[name] = it == s.by_status.end() ? 0 : it->second;
  }
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];  // wide enough for any int field
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms));
  return buf;
}

class ReviewStore {
 public:
  // Opens (creating if needed) a store directory and replays it.
  // StoreCorruption when either file cannot be replayed.
  explicit ReviewStore(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    for (const char* f : {"pairs.jsonl", "decisions.jsonl"}) {
      const auto p = std::filesystem::path(dir_) / f;
      if (!std::filesystem::exists(p)) std::ofstream(p).flush();
    }
    auto [items, index, seq] = replay(dir_);
    items_ = std::move(items);
    index_ = std::move(index);
    seq_ = seq;
  }

  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  const std::string& dir() const { return dir_; }
  std::string pairs_path() const { return dir_ + "/pairs.jsonl"; }
  std::string log_path() const { return dir_ + "/decisions.jsonl"; }

  // Adds pairs as pending, after any already present. Ids must be new.
  void add_pending(const std::vector<AlignedPair>& pairs) {
    std::unique_lock lock(mutex_);
    std::string lines;
    for (const AlignedPair& p : pairs) {
      if (index_.count(p.id)) {
        throw Error(ErrorKind::kInvalidArgument, "pair already in store: " + p.id);
      }
      lines += Json(p).dump() + "\n";
    }
    append_durably(pairs_path(), lines);
    for (const AlignedPair& p : pairs) {
      ReviewItem it;
      it.pair = p;
      it.src = p.src;
      it.tgt = p.tgt;
      it.order = items_.size();
      index_[p.id] = items_.size();
      items_.push_back(std::move(it));
    }
  }

  // Appends a decision. NotFound for unknown ids, Conflict when
  // expected_status no longer holds, InvalidArgument for bad content.
  ReviewItem decide(const std::string& pair_id, ReviewStatus status,
                    const std::string& annotator,
                    std::optional<std::string> corrected_source = std::nullopt,
                    std::optional<std::string> corrected_target = std::nullopt,
                    std::optional<std::string> notes = std::nullopt,
                    std::optional<ReviewStatus> expected_status = std::nullopt) {
    std::unique_lock lock(mutex_);
    const auto found = index_.find(pair_id);
    if (found == index_.end()) throw Error(ErrorKind::kNotFound, "no pair " + pair_id);
    ReviewItem& item = items_[found->second];
    if (expected_status && *expected_status != item.status) {
      throw Error(ErrorKind::kConflict,
                  "pair " + pair_id + " is " + review_status_name(item.status) +
                      ", not " + review_status_name(*expected_status));
    }
    if (status == ReviewStatus::kPending) {
      throw Error(ErrorKind::kInvalidArgument, "a decision cannot set pending");
    }
    if (annotator.empty()) throw Error(ErrorKind::kInvalidArgument, "annotator required");
    const bool has_edit = corrected_source.has_value() || corrected_target.has_value();
    if (status == ReviewStatus::kEdited && !has_edit) {
      throw Error(ErrorKind::kInvalidArgument, "edited needs a corrected text");
    }
    if (status != ReviewStatus::kEdited && has_edit) {
      throw Error(ErrorKind::kInvalidArgument, "corrections require status edited");
    }
    Decision d{seq_ + 1, pair_id, status, annotator, utc_timestamp(),
               std::move(corrected_source), std::move(corrected_target), std::move(notes)};
    append_durably(log_path(), Json(d).dump() + "\n");
    seq_ = d.seq;
    apply(item, d);
    return item;
  }

  std::optional<ReviewItem> get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return items_[it->second];
  }

  std::vector<ReviewItem> list(std::optional<ReviewStatus> status = std::nullopt) const {
    std::shared_lock lock(mutex_);
    std::vector<ReviewItem> out;
    for (const ReviewItem& it : items_) {
      if (!status || it.status == *status) out.push_back(it);
    }
    return out;
  }

  ReviewStats stats() const {
    std::shared_lock lock(mutex_);
    ReviewStats s;
    s.total = items_.size();
    s.decisions = seq_;
    for (const ReviewItem& it : items_) ++s.by_status[review_status_name(it.status)];
    return s;
  }

  // Live state, for comparison with a replay.
  std::vector<ReviewItem> snapshot() const { return list(); }

  // Rebuilds state from the files alone.
  static std::vector<ReviewItem> replay_items(const std::string& dir) {
    return std::get<0>(replay(dir));
  }

 private:
  using Index = std::map<std::string, std::size_t>;

  static void apply(ReviewItem& item, const Decision& d) {
    item.status = d.status;
    item.annotator = d.annotator;
    item.last_seq = d.seq;
    if (d.corrected_source) item.src = *d.corrected_source;
    if (d.corrected_target) item.tgt = *d.corrected_target;
    if (d.notes) item.notes = d.notes;
  }

  static std::tuple<std::vector<ReviewItem>, Index, uint64_t> replay(const std::string& dir) {
    std::vector<ReviewItem> items;
    Index index;
    uint64_t seq = 0;
    auto corrupt = [&](const std::string& why) {
      return Error(ErrorKind::kStoreCorruption, dir + ": " + why);
    };
    try {
      for (const AlignedPair& p : read_jsonl<AlignedPair>(dir + "/pairs.jsonl")) {
        if (index.count(p.id)) throw corrupt("duplicate pair id " + p.id);
        ReviewItem it;
        it.pair = p;
        it.src = p.src;
        it.tgt = p.tgt;
        it.order = items.size();
        index[p.id] = items.size();
        items.push_back(std::move(it));
      }
      for (const Decision& d : read_jsonl<Decision>(dir + "/decisions.jsonl")) {
        if (d.seq != seq + 1) {
          throw corrupt("decision sequence jumps from " + std::to_string(seq) + " to " +
                        std::to_string(d.seq));
        }
        const auto it = index.find(d.pair_id);
        if (it == index.end()) throw corrupt("decision for unknown pair " + d.pair_id);
        apply(items[it->second], d);
        seq = d.seq;
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kStoreCorruption) throw;
      throw corrupt(e.what());
    }
    return {std::move(items), std::move(index), seq};
  }

  // Appends and fsyncs before returning.
  static void append_durably(const std::string& path, const std::string& data) {
    if (data.empty()) return;
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorKind::kMissingInput, "cannot append to " + path);
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        ::close(fd);
        throw Error(ErrorKind::kMissingInput, "write failed: " + path);
      }
      done += static_cast<std::size_t>(n);
    }
    const int rc = ::fsync(fd);
    ::close(fd);
    if (rc != 0) throw Error(ErrorKind::kMissingInput, "fsync failed: " + path);
  }

  std::string dir_;
  mutable std::shared_mutex mutex_;
  std::vector<ReviewItem> items_;
  Index index_;
  uint64_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// Gold sampling, stratified by work.

struct SampleSpec {
  enum class Strategy { kUniformCap, kProportional };
  Strategy strategy = Strategy::kUniformCap;
  std::size_t cap = 50;     // kUniformCap: per-work maximum
  std::size_t total = 588;  // kProportional: batch size
  uint64_t seed = 0;
};

// Per-work counts of a batch.
inline std::map<std::string, std::size_t> stratum_counts(const std::vector<AlignedPair>& batch) {
  std::map<std::string, std::size_t> out;
  for (const AlignedPair& p : batch) ++out[p.lineage.work_id];
  return out;
}


// Works are visited in id order; inside a work the pick is a seeded shuffle
// of the pairs sorted by id, so the result depends only on the pair set.
inline std::vector<AlignedPair> sample_gold(const std::vector<AlignedPair>& pairs,
                                            const SampleSpec& spec) {
  if (pairs.empty()) throw Error(ErrorKind::kInvalidArgument, "no pairs to sample");
  std::map<std::string, std::vector<const AlignedPair*>> strata;
  for (const AlignedPair& p : pairs) strata[p.lineage.work_id].push_back(&p);

  std::map<std::string, std::size_t> take;
  if (spec.strategy == SampleSpec::Strategy::kUniformCap) {
    for (const auto& [work, members] : strata) take[work] = std::min(spec.cap, members.size());
  } else {
    // Largest remainder; ties go to the larger stratum, then the smaller id.
    const std::size_t total = std::min(spec.total, pairs.size());
    std::vector<std::tuple<double, std::size_t, std::string>> rema;
    std::size_t given = 0;
    for (const auto& [work, members] : strata) {
      const double exact = static_cast<double>(total) * static_cast<double>(members.size()) /
                           static_cast<double>(pairs.size());
      const auto floor = static_cast<std::size_t>(exact);
      take[work] = floor;
      given += floor;
      rema.emplace_back(exact - static_cast<double>(floor), members.size(), work);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
      return std::get<2>(a) < std::get<2>(b);
    });
    for (std::size_t k = 0; given < total; ++k, ++given) ++take[std::get<2>(rema[k])];
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<AlignedPair> out;
  for (auto& [work, members] : strata) {
    std::sort(members.begin(), members.end(),
              [](const AlignedPair* a, const AlignedPair* b) { return a->id < b->id; });
    detail::portable_shuffle(members, rng);
    for (std::size_t i = 0; i < take[work]; ++i) out.push_back(*members[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP API. Field names are frozen; see docs/review-api.md.

class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, std::optional<std::string> token = std::nullopt,
               const MarkerTable& markers = MarkerTable::defaults())
      : store_(store), token_(std::move(token)), markers_(markers) {
    // httplib's default adds SO_REUSEPORT, which would let a second server
    // share the port silently.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    routes();
  }

  // Binds; false when the port is taken. port 0 picks a free port.
  bool bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      return port_ > 0;
    }
    port_ = port;
    return server_.bind_to_port(host, port);
  }
  void serve() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  int port() const { return port_; }

 private:
  static void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }
  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, Json{{"error", message}});
  }

  bool authorized(const httplib::Request& req, httplib::Response& res) const {
    if (!token_) return true;
    if (req.get_header_value("X-Review-Token") == *token_) return true;
    send_error(res, 401, "missing or wrong X-Review-Token");
    return false;
  }

  void routes() {
    server_.Get("/api/pairs", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      std::optional<ReviewStatus> filter;
      if (req.has_param("status")) {
        filter = parse_review_status(req.get_param_value("status"));
        if (!filter) return send_error(res, 400, "unknown status");
      }
      const auto items = store_.list(filter);
      send_json(res, 200, Json{{"items", items}, {"count", items.size()}});
    });
    server_.Get(R"(/api/pairs/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      const auto item = store_.get(req.matches[1]);
      if (!item) return send_error(res, 404, "no such pair");
      send_json(res, 200, *item);
    });
    server_.Post(R"(/api/pairs/(.+)/decision)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   if (!authorized(req, res)) return;
                   decision(req.matches[1], req.body, res);
                 });
    server_.Get("/api/stats", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      send_json(res, 200, store_.stats());
    });
    server_.Get("/api/markers", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      Json ranges = Json::array();
      for (const MarkerRange& r : markers_.ranges()) {
        ranges.push_back({{"first", static_cast<uint32_t>(r.first)},
                          {"last", static_cast<uint32_t>(r.last)},
                          {"label", r.label}});
      }
      send_json(res, 200, Json{{"ranges", ranges}});
    });
  }

  void decision(const std::string& id, const std::string& body, httplib::Response& res) {
    Json j;
    try {
      j = Json::parse(body);
    } catch (const Json::exception&) {
      return send_error(res, 400, "body is not JSON");
    }
    if (!j.is_object()) return send_error(res, 400, "body must be an object");
    auto text_field = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      if (!j[key].is_string()) throw Error(ErrorKind::kInvalidArgument, std::string(key) + " must be a string");
      return j[key].get<std::string>();
    };
    try {
      const auto status_text = text_field("status");
      if (!status_text) return send_error(res, 400, "status required");
      const auto status = parse_review_status(*status_text);
      if (!status) return send_error(res, 400, "unknown status");
      std::optional<ReviewStatus> expected;
      if (const auto e = text_field("expected_status")) {
        expected = parse_review_status(*e);
        if (!expected) return send_error(res, 400, "unknown expected_status");
      }
      const ReviewItem item =
          store_.decide(id, *status, text_field("annotator").value_or(""),
                        text_field("corrected_source"), text_field("corrected_target"),
                        text_field("notes"), expected);
      send_json(res, 200, item);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::kNotFound: return send_error(res, 404, e.what());
        case ErrorKind::kConflict: return send_error(res, 409, e.what());
        case ErrorKind::kInvalidArgument: return send_error(res, 400, e.what());
        default: return send_error(res, 500, e.what());
      }
    }
  }

  ReviewStore& store_;
  std::optional<std::string> token_;
  MarkerTable markers_;
  httplib::Server server_;
  int port_ = 0;
};

}  // namespace pen

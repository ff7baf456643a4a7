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

// Adapter for normalizers that run outside the process.
//
// Subprocess: the command is started once per batch and speaks JSON lines,
// one {"id","text","language"} request per line on stdin and one
// {"id","text"} response per line on stdout, in any order.
// HTTP: each input is POSTed as the same JSON object; the response body is
// the {"id","text"} object.
//
// Outputs come back in input order. Provenance is a single opaque link.

#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pen/error.hpp"
#include "pen/normalize.hpp"
#include "pen/unicode.hpp"

namespace pen {

struct ExternalEndpoint {
  enum class Kind { kSubprocess, kHttp };
  Kind kind = Kind::kSubprocess;
  std::vector<std::string> command;  // argv for kSubprocess
  std::string url;                   // http://host:port/path for kHttp
  int timeout_ms = 30000;            // per response
  std::size_t concurrency = 4;       // requests in flight
};

struct ExternalInput {
  std::string id;
  std::string text;
  std::string language;
};

namespace detail {

inline NormalizerResult opaque_result(const ExternalInput& in,
                                      const std::string& out) {
  NormalizerResult r;
  r.text = canonical_decompose_utf8(out);
  r.opaque = true;
  const std::size_t n = canonical_decompose(to_u32(in.text)).size();
  r.spans.push_back({{0, n}, {0, to_u32(r.text).size()}, -1});
  if (r.text.empty() && !in.text.empty()) r.warnings.push_back("empty-output");
  return r;
}

inline std::string request_line(const ExternalInput& in) {
  return nlohmann::json{{"id", in.id}, {"text", in.text}, {"language", in.language}}
      .dump();
}

// Parses a response object; returns {id, text}.
inline std::pair<std::string, std::string> parse_response(
    const std::string& body, const std::string& context_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kEndpointFailure,
                "malformed response near input " + context_id + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("text") ||
      !j["id"].is_string() || !j["text"].is_string()) {
    throw Error(ErrorKind::kEndpointFailure,
                "response lacks string id/text near input " + context_id);
  }
  return {j["id"].get<std::string>(), j["text"].get<std::string>()};
}

class ChildProcess {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) {
      throw Error(ErrorKind::kConfigError, "empty endpoint command");
    }
    int in_pair[2];
    int out_pipe[2];
    // A socket for the child's stdin lets writes use MSG_NOSIGNAL.
    if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in_pair) != 0 ||
        pipe2(out_pipe, O_CLOEXEC) != 0) {
      throw Error(ErrorKind::kEndpointFailure,
                  std::string("cannot create pipes: ") + std::strerror(errno));
    }
    std::vector<char*> args;
    for (const std::string& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    pid_ = fork();
    if (pid_ < 0) {
      throw Error(ErrorKind::kEndpointFailure, "fork failed");
    }
    if (pid_ == 0) {
      dup2(in_pair[1], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      execvp(args[0], args.data());
      _exit(127);
    }
    close(in_pair[1]);
    close(out_pipe[1]);
    to_child_ = in_pair[0];
    from_child_ = out_pipe[0];
  }

  ~ChildProcess() {
    close_input();
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0) {
      // Give a well-behaved child a moment to exit on EOF, then kill it.
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, nullptr, WNOHANG) == pid_) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  void write_line(const std::string& line, const std::string& id) {
    std::string data = line + "\n";
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n =
          send(to_child_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::kEndpointFailure,
                    "endpoint closed its input while sending " + id);
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void close_input() {
    if (to_child_ >= 0) {
      close(to_child_);
      to_child_ = -1;
    }
  }

  // Reads one line; throws Timeout after `timeout_ms` without a full line.
  std::string read_line(int timeout_ms, const std::string& waiting_for) {
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                            deadline - std::chrono::steady_clock::now())
                            .count();
      if (left <= 0) {
        throw Error(ErrorKind::kTimeout,
                    "no response within " + std::to_string(timeout_ms) +
                        " ms for input " + waiting_for);
      }
      pollfd p{from_child_, POLLIN, 0};
      const int ready = poll(&p, 1, static_cast<int>(left));
      if (ready < 0 && errno == EINTR) continue;
      if (ready == 0) continue;
      char chunk[4096];
      const ssize_t n = read(from_child_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        throw Error(ErrorKind::kEndpointFailure,
                    "endpoint exited before answering input " + waiting_for);
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

inline std::vector<NormalizerResult> run_subprocess(
    const std::vector<ExternalInput>& inputs, const ExternalEndpoint& ep) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!index.emplace(inputs[i].id, i).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate input id " + inputs[i].id);
    }
  }
  std::vector<std::optional<NormalizerResult>> out(inputs.size());
  if (inputs.empty()) return {};
  ChildProcess child(ep.command);
  const std::size_t window = std::max<std::size_t>(1, ep.concurrency);
  std::size_t next = 0, done = 0;
  while (done < inputs.size()) {
    while (next < inputs.size() && next - done < window) {
      child.write_line(request_line(inputs[next]), inputs[next].id);
      ++next;
    }
    if (next == inputs.size()) child.close_input();
    // Report the oldest unanswered input on failure.
    std::size_t oldest = 0;
    while (oldest < inputs.size() && out[oldest]) ++oldest;
    const std::string& waiting = inputs[oldest].id;
    const auto [id, text] =
        parse_response(child.read_line(ep.timeout_ms, waiting), waiting);
    const auto it = index.find(id);
    if (it == index.end() || out[it->second]) {
      throw Error(ErrorKind::kEndpointFailure,
                  "unexpected response id '" + id + "' while waiting for " + waiting);
    }
    out[it->second] = opaque_result(inputs[it->second], text);
    ++done;
  }
  std::vector<NormalizerResult> results;
  for (auto& r : out) results.push_back(std::move(*r));
  return results;
}

inline std::vector<NormalizerResult> run_http(
    const std::vector<ExternalInput>& inputs, const ExternalEndpoint& ep) {
  const std::string& url = ep.url;
  const auto scheme_end = url.find("://");
  const auto path_start =
      url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string base = url.substr(0, path_start);
  const std::string path =
      path_start == std::string::npos ? "/" : url.substr(path_start);

  std::vector<std::optional<NormalizerResult>> out(inputs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::optional<Error> first_error;

  auto worker = [&] {
    httplib::Client client(base);
    const auto t = std::chrono::milliseconds(ep.timeout_ms);
    client.set_connection_timeout(t);
    client.set_read_timeout(t);
    client.set_write_timeout(t);
    while (!failed) {
      const std::size_t i = next++;
      if (i >= inputs.size()) return;
      const ExternalInput& in = inputs[i];
      try {
        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(path, request_line(in), "application/json");
        if (!res) {
          const auto elapsed = std::chrono::steady_clock::now() - started;
          if (elapsed >= t * 9 / 10) {
            throw Error(ErrorKind::kTimeout,
                        "no response within " + std::to_string(ep.timeout_ms) +
                            " ms for input " + in.id);
          }
          throw Error(ErrorKind::kEndpointFailure,
                      "request failed for input " + in.id + ": " +
                          httplib::to_string(res.error()));
        }
        if (res->status != 200) {
          throw Error(ErrorKind::kEndpointFailure,
                      "HTTP " + std::to_string(res->status) + " for input " + in.id);
        }
        const auto [id, text] = parse_response(res->body, in.id);
        if (id != in.id) {
          throw Error(ErrorKind::kEndpointFailure,
                      "response id '" + id + "' does not match input " + in.id);
        }
        out[i] = opaque_result(in, text);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = e;
        failed = true;
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t n =
      std::min(std::max<std::size_t>(1, ep.concurrency), std::max<std::size_t>(1, inputs.size()));
  for (std::size_t k = 0; k < n; ++k) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (first_error) throw *first_error;
  std::vector<NormalizerResult> results;
  for (auto& r : out) results.push_back(std::move(*r));
  return results;
}

}  // namespace detail

inline std::vector<NormalizerResult> normalize_external(
    const std::vector<ExternalInput>& inputs, const ExternalEndpoint& ep) {
  if (ep.timeout_ms <= 0) {
    throw Error(ErrorKind::kConfigError, "endpoint timeout must be positive");
  }
  if (ep.kind == ExternalEndpoint::Kind::kSubprocess) {
    return detail::run_subprocess(inputs, ep);
  }
  return detail::run_http(inputs, ep);
}

inline NormalizerResult normalize_external(std::string_view text,
                                           const std::string& language,
                                           const ExternalEndpoint& ep) {
  return normalize_external({{"0", std::string(text), language}}, ep).front();
}

}  // namespace pen

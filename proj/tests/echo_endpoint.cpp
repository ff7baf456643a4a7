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

// Test double for the subprocess normalizer protocol.
//   echo_endpoint [echo|upper|empty|silent|crash|swap|badjson] [sleep_ms]
// swap answers each pair of requests in reverse order.

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "echo";
  const int sleep_ms = argc > 2 ? std::stoi(argv[2]) : 0;
  std::string line;
  std::string held;
  auto answer = [&](const nlohmann::json& req) {
    std::string text = req["text"].get<std::string>();
    if (mode == "upper") {
      for (char& c : text) {
        if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
      }
    }
    if (mode == "empty") text.clear();
    return nlohmann::json{{"id", req["id"]}, {"text", text}}.dump();
  };
  while (std::getline(std::cin, line)) {
    if (sleep_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
    if (mode == "silent") continue;
    if (mode == "crash") return 3;
    if (mode == "badjson") {
      std::cout << "{not json" << std::endl;
      continue;
    }
    const auto req = nlohmann::json::parse(line);
    if (mode == "swap") {
      if (held.empty()) {
        held = answer(req);
        continue;
      }
      std::cout << answer(req) << "\n" << held << std::endl;
      held.clear();
      continue;
    }
    std::cout << answer(req) << std::endl;
  }
  if (!held.empty()) std::cout << held << std::endl;
  if (mode == "silent") std::this_thread::sleep_for(std::chrono::seconds(60));
  return 0;
}

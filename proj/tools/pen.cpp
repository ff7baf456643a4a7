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

// pen: command-line front end for the pipeline stages, gold sampling, the
// review service and the synthetic corpus generator.
//
// Exit status: 0 ok, 1 other error, 2 ConfigError, 3 MissingInput,
// 4 review port in use, 5 review store corrupt.

#include <CLI11.hpp>

#include <iostream>
#include <iterator>
#include <optional>
#include <string>

#include "pen/pipeline.hpp"
#include "pen/review.hpp"
#include "pen/synth.hpp"

namespace {

using pen::Json;

// Optional flag values layered over the config file before validation.
struct Overrides {
  std::optional<std::string> workdir;
  std::optional<uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> n, doc_freq_cap, min_shared, max_candidates;
  std::optional<std::size_t> beam_width, min_align_chars;
  std::optional<std::size_t> min_continuous_lines;
  std::optional<double> min_match_rate, line_coverage_threshold;
  std::optional<bool> require_same_work;
  std::optional<std::size_t> min_bytes, max_bytes, target_bytes;
  std::optional<std::string> rules;
  std::optional<std::string> eval_input;
  std::optional<bool> macro;

  template <typename T>
  static void put(Json& j, const std::string& key, const std::optional<T>& v) {
    if (v) j[key] = *v;
  }

  void apply(Json& j) const {
    put(j, "workdir", workdir);
    put(j, "seed", seed);
    put(j, "threads", threads);
    put(j, "gram_n", n);
    put(j, "doc_freq_cap", doc_freq_cap);
    put(j, "min_shared_grams", min_shared);
    put(j, "max_candidates_per_page", max_candidates);
    auto section = [&](const char* name) -> Json& {
      if (!j.contains(name)) j[name] = Json::object();
      return j[name];
    };
    if (beam_width || min_align_chars) {
      put(section("align"), "beam_width", beam_width);
      put(section("align"), "min_align_chars", min_align_chars);
    }
    if (min_continuous_lines || min_match_rate || line_coverage_threshold || require_same_work) {
      Json& f = section("filter");
      put(f, "min_continuous_lines", min_continuous_lines);
      put(f, "min_match_rate", min_match_rate);
      put(f, "line_coverage_threshold", line_coverage_threshold);
      put(f, "require_same_work", require_same_work);
    }
    if (min_bytes || max_bytes || target_bytes) {
      Json& c = section("chunk");
      put(c, "min_bytes", min_bytes);
      put(c, "max_bytes", max_bytes);
      put(c, "target_bytes", target_bytes);
    }
    if (rules) section("normalizer")["rules"] = *rules;
    if (eval_input || macro) {
      put(section("eval"), "input", eval_input);
      put(section("eval"), "macro", macro);
    }
  }
};

pen::PipelineConfig load_config(const std::string& path, const Overrides& o) {
  Json j;
  try {
    j = Json::parse(pen::read_file(path));
  } catch (const pen::Error&) {
    throw pen::Error(pen::ErrorKind::kConfigError, "cannot read config " + path);
  } catch (const Json::exception& e) {
    throw pen::Error(pen::ErrorKind::kConfigError, path + ": " + e.what());
  }
  if (!j.is_object()) throw pen::Error(pen::ErrorKind::kConfigError, "config must be an object");
  // Paths given on the command line are relative to the working directory.
  Overrides cli = o;
  auto absolute = [](std::optional<std::string>& p) {
    if (p && !p->empty()) *p = std::filesystem::absolute(*p).string();
  };
  absolute(cli.workdir);
  absolute(cli.rules);
  absolute(cli.eval_input);
  cli.apply(j);
  const auto parent = std::filesystem::path(path).parent_path();
  return pen::PipelineConfig::from_json(j, parent.empty() ? "." : parent.string());
}

int exit_code(const pen::Error& e) {
  switch (e.kind()) {
    case pen::ErrorKind::kConfigError: return 2;
    case pen::ErrorKind::kMissingInput: return 3;
    case pen::ErrorKind::kStoreCorruption: return 5;
    default: return 1;
  }
}

void print_report(const pen::StageReport& r) { std::cout << r.to_json().dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pen: pre-editorial normalization toolkit"};
  app.require_subcommand(1);
  Overrides o;
  std::string config_path;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "pipeline config (JSON)")->required();
    sub->add_option("--workdir", o.workdir, "override the work directory");
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  };

  std::map<std::string, pen::Stage> stage_commands;
  for (pen::Stage s : pen::kAllStages) {
    const std::string name = pen::stage_name(s);
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    add_config(sub);
    stage_commands[name] = s;
    switch (s) {
      case pen::Stage::kIndex:
        sub->add_option("--n", o.n, "gram length");
        sub->add_option("--doc-freq-cap", o.doc_freq_cap, "drop grams in more passages");
        break;
      case pen::Stage::kCandidates:
        sub->add_option("--min-shared-grams", o.min_shared, "minimum shared grams");
        sub->add_option("--max-candidates", o.max_candidates, "per-page cap (0 = none)");
        break;
      case pen::Stage::kAlign:
        sub->add_option("--beam-width", o.beam_width, "beam width");
        sub->add_option("--min-align-chars", o.min_align_chars, "minimum covered characters");
        break;
      case pen::Stage::kPairs:
        sub->add_option("--min-continuous-lines", o.min_continuous_lines);
        sub->add_option("--min-match-rate", o.min_match_rate);
        sub->add_option("--line-coverage-threshold", o.line_coverage_threshold);
        sub->add_option("--require-same-work", o.require_same_work);
        sub->add_option("--min-bytes", o.min_bytes);
        sub->add_option("--max-bytes", o.max_bytes);
        sub->add_option("--target-bytes", o.target_bytes);
        sub->add_option("--seed", o.seed, "manifest shuffle seed");
        break;
      case pen::Stage::kNormalize:
        sub->add_option("--rules", o.rules, "rule table (TSV)");
        break;
      case pen::Stage::kEval:
        sub->add_option("--input", o.eval_input, "evaluate this {id,gold,pred,...} JSONL instead");
        sub->add_option("--macro", o.macro, "macro-average CER/WER");
        break;
      default: break;
    }
  }

  CLI::App* run = app.add_subcommand("run", "run stages in order");
  add_config(run);
  std::string until = "eval";
  run->add_option("--until", until, "last stage to run");

  CLI::App* sample = app.add_subcommand("sample-gold", "sample pairs into a review store");
  std::string pairs_file, store_dir, strategy = "uniform";
  pen::SampleSpec spec;
  sample->add_option("-c,--config", config_path, "config; pairs come from its pairs stage");
  sample->add_option("--pairs", pairs_file, "pairs JSONL (instead of --config)");
  sample->add_option("--store", store_dir, "review store directory")->required();
  sample->add_option("--strategy", strategy, "uniform | proportional")
      ->check(CLI::IsMember({"uniform", "proportional"}));
  sample->add_option("--cap", spec.cap, "uniform: per-work cap");
  sample->add_option("--total", spec.total, "proportional: batch size");
  sample->add_option("--seed", spec.seed, "sampling seed");

  CLI::App* serve = app.add_subcommand("review-serve", "serve the review API");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> token;
  serve->add_option("--store", store_dir, "review store directory")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--token", token, "required X-Review-Token value")
      ->envname("PEN_REVIEW_TOKEN");

  CLI::App* synth = app.add_subcommand("synth", "write a planted synthetic corpus");
  pen::SynthSpec synth_spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--editions", synth_spec.editions);
  synth->add_option("--pages", synth_spec.pages);
  synth->add_option("--noise", synth_spec.noise)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--swap", synth_spec.swap_halves, "probability of swapped halves")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", synth_spec.seed);

  CLI::App* text = app.add_subcommand("normalize-text", "normalize one text with the rules");
  std::string input, language = "la", rules_path;
  bool no_capitalize = false;
  text->add_option("text", input, "text (read from stdin when absent)");
  text->add_option("--language", language);
  text->add_option("--rules", rules_path, "rule table (TSV)");
  text->add_flag("--no-capitalize", no_capitalize);

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [name, stage] : stage_commands) {
      if (app.got_subcommand(name)) {
        pen::Pipeline pipeline(load_config(config_path, o));
        print_report(pipeline.run(stage));
        return 0;
      }
    }
    if (app.got_subcommand(run)) {
      const auto last = pen::parse_stage(until);
      if (!last) throw pen::Error(pen::ErrorKind::kConfigError, "unknown stage " + until);
      pen::Pipeline pipeline(load_config(config_path, o));
      for (const auto& r : pipeline.run_through(*last)) print_report(r);
      return 0;
    }
    if (app.got_subcommand(sample)) {
      if (config_path.empty() == pairs_file.empty()) {
        throw pen::Error(pen::ErrorKind::kConfigError, "give exactly one of --config or --pairs");
      }
      if (!config_path.empty()) {
        const pen::Pipeline pipeline(load_config(config_path, o));
        pairs_file = pipeline.stage_dir(pen::Stage::kPairs) + "/pairs.jsonl";
      }
      if (!std::filesystem::exists(pairs_file)) {
        throw pen::Error(pen::ErrorKind::kMissingInput, pairs_file + " not found");
      }
      spec.strategy = strategy == "uniform" ? pen::SampleSpec::Strategy::kUniformCap
                                            : pen::SampleSpec::Strategy::kProportional;
      const auto batch = pen::sample_gold(pen::read_jsonl<pen::AlignedPair>(pairs_file), spec);
      pen::ReviewStore store(store_dir);
      store.add_pending(batch);
      std::cout << Json{{"sampled", batch.size()}, {"per_work", pen::stratum_counts(batch)}}.dump()
                << std::endl;
      return 0;
    }
    if (app.got_subcommand(serve)) {
      pen::ReviewStore store(store_dir);
      pen::ReviewServer server(store, token);
      if (!server.bind(host, port)) {
        std::cerr << "pen: cannot bind " << host << ":" << port << " (port in use?)\n";
        return 4;
      }
      std::cerr << "pen: review API on http://" << host << ":" << server.port() << "/api\n";
      server.serve();
      return 0;
    }
    if (app.got_subcommand(synth)) {
      std::filesystem::create_directories(synth_out);
      pen::write_synth_corpus(pen::make_synth_corpus(synth_spec), synth_out);
      std::cout << Json{{"editions", synth_spec.editions}, {"pages", synth_spec.pages},
                        {"out", synth_out}}
                       .dump()
                << std::endl;
      return 0;
    }
    if (app.got_subcommand(text)) {
      if (input.empty()) {
        input.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
        while (!input.empty() && (input.back() == '\n' || input.back() == '\r')) input.pop_back();
      }
      const pen::RuleSet rules =
          rules_path.empty() ? pen::RuleSet::defaults() : pen::RuleSet::load(rules_path);
      const pen::NormalizerResult r = pen::RuleNormalizer(rules, !no_capitalize).normalize(input, language);
      std::cout << Json{{"text", pen::to_utf8(pen::canonical_compose(pen::to_u32(r.text)))},
                        {"violations", pen::validate_against_task(r, input)}}
                       .dump()
                << std::endl;
      return 0;
    }
  } catch (const pen::Error& e) {
    std::cerr << "pen: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "pen: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

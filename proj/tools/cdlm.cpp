// Copyright 2026 The CDLM Authors.
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

// cdlm: build chunk datastores, generate, score, benchmark and inspect.
// All machine output is JSON lines on stdout; diagnostics go to stderr.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdlm/bridge_lm.hpp"
#include "cdlm/datastore.hpp"
#include "cdlm/extraction.hpp"
#include "cdlm/generation.hpp"
#include "cdlm/metrics.hpp"
#include "cdlm/reference_lm.hpp"
#include "cdlm/scoring.hpp"
#include "json.hpp"

namespace {

using namespace cdlm;

struct LmOptions {
  std::string spec;        // builtin:PATH | bridge:CMD
  std::string vocab_path;  // required for bridge LMs
};

std::unique_ptr<LanguageModel> open_lm(const std::string& spec,
                                       const std::string& vocab_path) {
  if (spec.rfind("builtin:", 0) == 0) {
    return std::make_unique<ReferenceLm>(ReferenceLm::load(spec.substr(8)));
  }
  if (spec.rfind("bridge:", 0) == 0) {
    if (vocab_path.empty()) {
      throw UsageError("--vocab is required with a bridge LM");
    }
    return std::make_unique<BridgeLm>(spec.substr(7), Vocabulary::load(vocab_path));
  }
  throw UsageError("LM must be builtin:PATH or bridge:CMD, got '" + spec + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void emit(const nlohmann::json& j) { std::cout << j.dump() << '\n'; }

void log_config(const CLI::App& app) {
  // The fully resolved configuration of the chosen command, defaults
  // included, on one line.
  const auto* cmd = app.get_subcommands().front();
  std::string resolved = cmd->get_name() + " " + cmd->config_to_str(true, false);
  for (auto& c : resolved) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "config: " << resolved << '\n';
}

RetrievalParams retrieval_params(double eta, const std::string& map) {
  RetrievalParams p;
  p.map = parse_similarity_map(map);
  if (eta == 1.0) {
    p.enabled = false;
    p.eta = 0.0;
  } else {
    p.eta = eta;
  }
  p.validate();
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chunk-distilled language modeling toolkit"};
  app.set_config("--config", "", "key=value configuration file; flags override it");
  app.require_subcommand(1);
  bool pretty = false;
  app.add_flag("--pretty", pretty, "human-readable output");

  // vocab
  std::string vocab_corpus, vocab_out;
  auto* vocab_cmd = app.add_subcommand("vocab", "build a vocabulary file from a corpus");
  vocab_cmd->add_option("--corpus", vocab_corpus)->required();
  vocab_cmd->add_option("--out", vocab_out)->required();

  // fit-lm
  std::string fit_corpus, fit_vocab, fit_out;
  ReferenceLmParams fit_params;
  auto* fit_cmd = app.add_subcommand("fit-lm", "fit the built-in reference LM");
  fit_cmd->add_option("--corpus", fit_corpus)->required();
  fit_cmd->add_option("--vocab", fit_vocab, "vocabulary file (default: derived from corpus)");
  fit_cmd->add_option("--out", fit_out)->required();
  fit_cmd->add_option("--dim", fit_params.dim)->capture_default_str();
  fit_cmd->add_option("--decay", fit_params.decay)->capture_default_str();
  fit_cmd->add_option("--window", fit_params.window)->capture_default_str();
  fit_cmd->add_option("--smoothing", fit_params.smoothing)->capture_default_str();
  fit_cmd->add_option("--seed", fit_params.seed)->capture_default_str();

  // build
  std::string build_corpus, build_teacher, build_base, build_out, build_spans,
      build_vocab;
  ExtractionParams ext;
  bool no_suffixes = false;
  auto* build_cmd = app.add_subcommand("build", "extract chunks and write a datastore");
  build_cmd->add_option("--corpus", build_corpus)->required();
  build_cmd->add_option("--teacher", build_teacher, "teacher LM (default: --base)");
  build_cmd->add_option("--base", build_base)->required();
  build_cmd->add_option("--vocab", build_vocab, "vocabulary file for bridge LMs");
  auto* gamma_opt = build_cmd->add_option("--gamma", ext.gamma)->capture_default_str();
  build_cmd->add_option("--window", ext.window)->capture_default_str();
  build_cmd->add_option("--stride", ext.stride)->capture_default_str();
  build_cmd->add_option("--context-len", ext.context_len)->capture_default_str();
  build_cmd->add_option("--min-run-len", ext.min_run_len)->capture_default_str();
  build_cmd->add_flag("--no-suffixes", no_suffixes, "store maximal runs only");
  build_cmd->add_option("--spans", build_spans, "annotated spans (expert mode)");
  build_cmd->add_option("--out", build_out)->required();

  // generate
  std::string ds_path, lm_spec, lm_vocab, prompt_file, mode = "greedy",
      sim_map = "piecewise";
  double eta = 0.8;
  GenerationParams gen;
  auto add_lm_options = [&](CLI::App* cmd) {
    cmd->add_option("--datastore", ds_path)->required();
    cmd->add_option("--lm", lm_spec, "builtin:PATH or bridge:CMD")->required();
    cmd->add_option("--vocab", lm_vocab, "vocabulary file for bridge LMs");
    cmd->add_option("--eta", eta, "similarity knee; 1 disables retrieval")
        ->capture_default_str();
    cmd->add_option("--similarity-map", sim_map)
        ->check(CLI::IsMember({"piecewise", "identity"}))
        ->capture_default_str();
  };
  auto add_gen_options = [&](CLI::App* cmd) {
    cmd->add_option("--mode", mode)
        ->check(CLI::IsMember({"greedy", "sample"}))
        ->capture_default_str();
    cmd->add_option("--max-tokens", gen.max_tokens)->capture_default_str();
    cmd->add_option("--seed", gen.seed)->capture_default_str();
    cmd->add_option("--temperature", gen.temperature)->capture_default_str();
    cmd->add_option("--prompt-file", prompt_file)->required();
  };
  auto* gen_cmd = app.add_subcommand("generate", "chunk-interleaved generation");
  add_lm_options(gen_cmd);
  add_gen_options(gen_cmd);

  // score
  std::string score_input;
  std::size_t seq_len = 512;
  auto* score_cmd = app.add_subcommand("score", "corpus perplexity under the mixture");
  add_lm_options(score_cmd);
  score_cmd->add_option("--input", score_input)->required();
  score_cmd->add_option("--seq-len", seq_len)->capture_default_str();

  // bench
  std::size_t repetitions = 1;
  auto* bench_cmd = app.add_subcommand("bench", "FPS/TTS benchmark against the base LM");
  add_lm_options(bench_cmd);
  add_gen_options(bench_cmd);
  bench_cmd->add_option("--repetitions", repetitions)->capture_default_str();

  // stats
  std::string stats_path;
  auto* stats_cmd = app.add_subcommand("stats", "datastore statistics");
  stats_cmd->add_option("--datastore", stats_path)->required();

  // entities
  std::string gens_path, entities_path, csv_out;
  bool case_insensitive = false;
  auto* ent_cmd = app.add_subcommand("entities", "entity coverage of generations");
  ent_cmd->add_option("--generations", gens_path, "one generation per line")->required();
  ent_cmd->add_option("--entities", entities_path, "one entity per line")->required();
  ent_cmd->add_flag("--case-insensitive", case_insensitive);
  ent_cmd->add_option("--csv", csv_out, "write the rank-frequency table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  log_config(app);

  try {
    if (*vocab_cmd) {
      const auto vocab = Vocabulary::from_text(read_lines(vocab_corpus));
      vocab.save(vocab_out);
      emit({{"vocab_size", vocab.size()},
            {"fingerprint", to_hex(vocab.fingerprint())}});
    } else if (*fit_cmd) {
      const auto lines = read_lines(fit_corpus);
      auto vocab = fit_vocab.empty() ? Vocabulary::from_text(lines)
                                     : Vocabulary::load(fit_vocab);
      const auto corpus = encode_corpus(vocab, lines);
      const auto lm = ReferenceLm::fit(corpus, std::move(vocab), fit_params);
      lm.save(fit_out);
      emit({{"model", fit_out},
            {"name", lm.name()},
            {"vocab_size", lm.vocabulary().size()},
            {"fingerprint", to_hex(lm.vocabulary().fingerprint())}});
    } else if (*build_cmd) {
      ext.store_suffixes = !no_suffixes;
      auto base = open_lm(build_base, build_vocab);
      const bool expert = !build_spans.empty();
      const std::string teacher_spec = build_teacher.empty() ? build_base : build_teacher;
      const auto corpus_text = read_file(build_corpus);
      const auto corpus = encode_corpus(base->vocabulary(), read_lines(build_corpus));

      std::vector<ChunkRecord> records;
      std::string mode_name;
      if (expert) {
        if (gamma_opt->count() > 0) {
          std::cerr << "warning: --gamma is ignored in expert mode\n";
        }
        auto result = extract_expert_chunks(corpus, load_spans(build_spans), *base,
                                            ext.context_len);
        if (result.skipped > 0) {
          std::cerr << "warning: skipped " << result.skipped
                    << " span(s) starting at offset 0\n";
        }
        records = std::move(result.records);
        mode_name = "expert";
      } else if (teacher_spec == build_base) {
        records = extract_chunks(corpus, *base, *base, ext);
        mode_name = "self";
      } else {
        auto teacher = open_lm(teacher_spec, build_vocab);
        records = extract_chunks(corpus, *teacher, *base, ext);
        mode_name = "knowledge";
      }
      nlohmann::json meta{{"mode", mode_name},
                          {"base", base->name()},
                          {"corpus_hash", to_hex(sha256(corpus_text))},
                          {"num_records", records.size()}};
      if (!expert) {
        meta["gamma"] = ext.gamma;
        meta["teacher"] = teacher_spec == build_base ? base->name() : teacher_spec;
      }
      const auto store = ChunkDatastore::build(std::move(records), base->dim(),
                                               base->vocabulary(), std::move(meta));
      store.save(build_out);
      const auto s = store.stats();
      if (s.num_chunks == 0) std::cerr << "warning: datastore is empty\n";
      auto out = s.to_json();
      out["mode"] = mode_name;
      out["out"] = build_out;
      emit(out);
    } else if (*gen_cmd || *bench_cmd) {
      auto lm = open_lm(lm_spec, lm_vocab);
      const auto store = ChunkDatastore::load(ds_path);
      gen.retrieval = retrieval_params(eta, sim_map);
      gen.z_mode = gen.token_mode = parse_decode_mode(mode);
      std::vector<TokenSeq> prompts;
      for (const auto& line : read_lines(prompt_file)) {
        prompts.push_back(lm->vocabulary().encode(line));
      }
      if (*gen_cmd) {
        for (const auto& prompt : prompts) {
          emit(to_json(generate(*lm, store, prompt, gen), lm->vocabulary()));
        }
      } else {
        const auto report = bench(prompts, *lm, store, gen, repetitions);
        if (pretty) {
          std::cout << "prompts: " << report.prompts.size() << "\nFPS: "
                    << 100.0 * report.fps << "%\nTTS (median): "
                    << 100.0 * report.tts_median << "%\naccepted: "
                    << report.proposals_accepted << "/" << report.proposals_made
                    << "\nutilization: " << 100.0 * report.utilization << "%\n";
        } else {
          emit(report.to_json());
        }
      }
    } else if (*score_cmd) {
      auto lm = open_lm(lm_spec, lm_vocab);
      const auto store = ChunkDatastore::load(ds_path);
      const auto params = retrieval_params(eta, sim_map);
      const auto docs = encode_corpus(lm->vocabulary(), read_lines(score_input));
      const auto result = ppl(split_sequences(docs, seq_len), store, *lm, params);
      emit({{"ppl", result.ppl},
            {"num_sequences", result.num_sequences},
            {"total_tokens", result.total_tokens}});
    } else if (*stats_cmd) {
      const auto s = ChunkDatastore::load(stats_path).stats();
      if (pretty) {
        std::cout << "#chunks: " << s.num_chunks << "\n#chunk tries: " << s.num_tries
                  << "\navg #chunks per trie: " << s.avg_pct_per_trie
                  << "%\nmax depth: " << s.max_depth << '\n';
      } else {
        emit(s.to_json());
      }
    } else if (*ent_cmd) {
      // Every line is a generation, including empty ones.
      std::vector<std::string> generations;
      {
        std::istringstream in(read_file(gens_path));
        for (std::string line; std::getline(in, line);) generations.push_back(line);
      }
      const auto report = entity_coverage(generations, read_lines(entities_path),
                                          case_insensitive);
      emit(report.to_json());
      if (!csv_out.empty()) {
        std::ofstream csv(csv_out);
        if (!csv) throw DataError("cannot write " + csv_out);
        csv << report.rank_frequency_csv();
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

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

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cdlm/datastore.hpp"
#include "gtest/gtest.h"
#include "json.hpp"
#include "test_util.hpp"

namespace cdlm {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(CDLM_BIN) + " " + args + " 2>/dev/null";
  RunResult r;
  std::FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("cdlm_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream corpus(path("corpus.txt"));
    for (const auto& d : testing::templated_corpus(120, 5)) corpus << d << '\n';
    corpus.close();
    std::ofstream prompts(path("prompts.txt"));
    prompts << "alice lives in\nthe capital of\nbob said that\n";
    prompts.close();
    ASSERT_EQ(run("fit-lm --corpus " + path("corpus.txt") + " --out " + path("lm.json") +
                  " --dim 16").code, 0);
    ASSERT_EQ(run("build --corpus " + path("corpus.txt") + " --base builtin:" +
                  path("lm.json") + " --gamma 0.8 --context-len 8 --window 64 --stride 48" +
                  " --out " + path("ds.bin")).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static std::string lm_args(const std::string& store = "ds.bin") {
    return " --datastore " + path(store) + " --lm builtin:" + path("lm.json");
  }

  static fs::path dir_;
};

fs::path CliTest::dir_;

TEST_F(CliTest, SelfBuildProducesChunks) {
  const auto r = run("stats --datastore " + path("ds.bin"));
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_GT(j.at("num_chunks").get<std::size_t>(), 0u);
  EXPECT_GT(j.at("num_tries").get<std::size_t>(), 0u);
  const auto store = ChunkDatastore::load(path("ds.bin"));
  EXPECT_EQ(store.meta().at("mode"), "self");
  EXPECT_EQ(store.meta().at("gamma"), 0.8);
}

TEST_F(CliTest, GammaOneBuildsEmptyStore) {
  const auto r = run("build --corpus " + path("corpus.txt") + " --base builtin:" +
                     path("lm.json") + " --gamma 1 --out " + path("empty.bin"));
  EXPECT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(run("stats --datastore " + path("empty.bin")).out);
  EXPECT_EQ(j.at("num_chunks"), 0);
}

TEST_F(CliTest, GenerateIsDeterministic) {
  const std::string args = "generate" + lm_args() + " --prompt-file " + path("prompts.txt") +
                           " --eta 0.6 --mode sample --seed 4 --max-tokens 24";
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  std::istringstream lines(a.out);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"tokens", "text", "steps", "counters", "fps"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j.at("counters").at("tokens_generated"), 24);
    ++count;
  }
  EXPECT_EQ(count, 3);
}

TEST_F(CliTest, DisabledRetrievalScoresLikeBase) {
  const auto on = nlohmann::json::parse(
      run("score" + lm_args() + " --input " + path("corpus.txt") + " --eta 1").out);
  const auto empty_store = nlohmann::json::parse(
      run("score" + lm_args("empty.bin") + " --input " + path("corpus.txt")).out);
  EXPECT_EQ(on.at("ppl").get<double>(), empty_store.at("ppl").get<double>());
  const auto mixed = nlohmann::json::parse(
      run("score" + lm_args() + " --input " + path("corpus.txt") + " --eta 0.8").out);
  EXPECT_NE(mixed.at("ppl").get<double>(), on.at("ppl").get<double>());
}

TEST_F(CliTest, BenchReportsFps) {
  const auto r = run("bench" + lm_args() + " --prompt-file " + path("prompts.txt") +
                     " --eta 0.6 --max-tokens 32");
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_GE(j.at("fps").get<double>(), 0.0);
  EXPECT_TRUE(j.contains("utilization"));
}

TEST_F(CliTest, StatsOnHandBuiltStore) {
  const Vocabulary vocab({"I", "love", "NLP", "so", "much"});
  const auto store = ChunkDatastore::build(
      {testing::make_record({0, 1}, 2, {3, 4}, ContextVector::Unit(2, 0), 0, 3),
       testing::make_record({1, 2}, 3, {4}, ContextVector::Unit(2, 1), 0, 4)},
      2, vocab);
  store.save(path("tiny.bin"));
  const auto j = nlohmann::json::parse(run("stats --datastore " + path("tiny.bin")).out);
  EXPECT_EQ(j.at("num_chunks"), 2);
  EXPECT_EQ(j.at("num_tries"), 2);
  EXPECT_EQ(j.at("avg_pct_per_trie"), 50.0);
}

TEST_F(CliTest, Entities) {
  std::ofstream(path("gens.txt")) << "a Turing machine is not a real Turing machine\n";
  std::ofstream(path("ents.txt")) << "Turing machine\n";
  const auto r = run("entities --generations " + path("gens.txt") + " --entities " +
                     path("ents.txt") + " --csv " + path("rank.csv"));
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("avg_count"), 2.0);
  EXPECT_EQ(j.at("unique_entities"), 1);
  std::ifstream csv(path("rank.csv"));
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(row, "1,Turing machine,2");
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  std::ofstream(path("cfg.ini")) << "[generate]\nmax-tokens=5\n";
  const std::string base = "--config " + path("cfg.ini") + " generate" + lm_args() +
                           " --prompt-file " + path("prompts.txt");
  const auto plain = run(base);
  const auto from_file = nlohmann::json::parse(plain.out.substr(0, plain.out.find('\n')));
  EXPECT_EQ(from_file.at("counters").at("tokens_generated"), 5);
  const auto r = run(base + " --max-tokens 3");
  const auto overridden = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
  EXPECT_EQ(overridden.at("counters").at("tokens_generated"), 3);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("generate --bogus").code, 2);
  EXPECT_EQ(run("generate" + lm_args() + " --prompt-file " + path("prompts.txt") +
                " --eta 1.5").code, 2);
  EXPECT_EQ(run("stats --datastore " + path("corpus.txt")).code, 3);
  EXPECT_EQ(run("stats --datastore " + path("missing.bin")).code, 3);
  const std::string vocab_file = path("vocab.txt");
  ASSERT_EQ(run("vocab --corpus " + path("corpus.txt") + " --out " + vocab_file).code, 0);
  EXPECT_EQ(run("generate --datastore " + path("ds.bin") + " --lm bridge:'exit 0' --vocab " +
                vocab_file + " --prompt-file " + path("prompts.txt")).code, 4);
}

}  // namespace
}  // namespace cdlm

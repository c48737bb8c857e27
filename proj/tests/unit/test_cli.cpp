// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <unistd.h>

#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "phraseforge/phrase_index.hpp"
#include "phraseforge/synthetic.hpp"
#include "test_util.hpp"

using namespace phraseforge;
namespace fs = std::filesystem;

namespace {

const std::string kCli = PF_CLI_PATH;

// Small generated benchmark plus a fast training config, shared by the suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(pftest::scratch_dir("cli_" + std::to_string(::getpid())));
    synthetic::Options o;
    o.topics = 2;
    o.passages_per_topic = 4;
    synthetic::write_benchmark(synthetic::generate(o), *dir_);
    pftest::write_file(*dir_ / "fast.cfg",
                       "epochs = 3\nfinetune_epochs = 1\ndim = 16\nbatch_size = 4\n");
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string p(const std::string& name) { return (*dir_ / name).string(); }
  static std::string cli(const std::string& args) {
    return kCli + " --config " + p("fast.cfg") + " " + args;
  }

  static fs::path* dir_;
};

fs::path* CliTest::dir_ = nullptr;

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_F(CliTest, MissingCorpusExitsTwoWithJsonError) {
  const auto err = p("err.txt");
  const auto r = pftest::run_command(cli("index --corpus /nonexistent.jsonl --out " + p("x.bin")), err);
  EXPECT_EQ(r.exit_code, 2);
  const auto line = nlohmann::json::parse(pftest::read_file(err));
  EXPECT_EQ(line["status"], "error");
  EXPECT_EQ(line["exit_code"], 2);
  EXPECT_EQ(line["cause"], "corpus not found");
}

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(pftest::run_command(kCli + " frobnicate").exit_code, 2);
  EXPECT_EQ(pftest::run_command(kCli + " index").exit_code, 2);
}

TEST_F(CliTest, IndexManifestCountsAndIdempotentBytes) {
  ASSERT_EQ(pftest::run_command(cli("index --corpus " + p("corpus.jsonl") + " --out " + p("a.bin"))).exit_code, 0);
  ASSERT_EQ(pftest::run_command(cli("index --corpus " + p("corpus.jsonl") + " --out " + p("b.bin"))).exit_code, 0);
  EXPECT_EQ(pftest::read_file(p("a.bin")), pftest::read_file(p("b.bin")));
  const auto manifest = nlohmann::json::parse(pftest::read_file(p("a.bin.manifest.json")));
  const auto corpus = load_corpus(p("corpus.jsonl"));
  std::size_t expected = 0;
  for (const auto& passage : corpus.passages()) expected += phrase_span_count(passage.tokens.size(), 20);
  EXPECT_EQ(manifest["entries"].get<std::size_t>(), expected);
  EXPECT_EQ(manifest["dim"], 16);
  EXPECT_EQ(manifest["passages"], corpus.size());
}

TEST_F(CliTest, TrainWithoutTurnLossAndRerunDeterminism) {
  const std::string base = "train --corpus " + p("corpus.jsonl") + " --conversations " +
                           p("conversations.jsonl");
  ASSERT_EQ(pftest::run_command(cli(base + " --out " + p("h1.bin") + " --no-turn-loss")).exit_code, 0);
  for (const auto& line : lines_of(pftest::read_file(p("h1.bin.trajectory.jsonl")))) {
    EXPECT_EQ(nlohmann::json::parse(line)["l_turn"], 0.0);
  }
  ASSERT_EQ(pftest::run_command(cli(base + " --out " + p("h2.bin"))).exit_code, 0);
  ASSERT_EQ(pftest::run_command(cli(base + " --out " + p("h3.bin"))).exit_code, 0);
  EXPECT_EQ(pftest::read_file(p("h2.bin.trajectory.jsonl")), pftest::read_file(p("h3.bin.trajectory.jsonl")));
  EXPECT_EQ(pftest::read_file(p("h2.bin")), pftest::read_file(p("h3.bin")));
  const auto first = nlohmann::json::parse(lines_of(pftest::read_file(p("h2.bin.trajectory.jsonl")))[0]);
  EXPECT_GT(first["l_turn"].get<double>(), 0.0);
}

TEST_F(CliTest, RetrievePlantedSpanAndConversationLines) {
  ASSERT_EQ(pftest::run_command(cli("index --corpus " + p("corpus.jsonl") + " --out " + p("r.bin"))).exit_code, 0);
  const auto corpus = load_corpus(p("corpus.jsonl"));
  const auto& passage = corpus.passages()[3];
  const auto spans = enumerate_phrase_spans(passage, 20);
  const auto& planted = spans[spans.size() / 2];
  const std::string question = compose_phrase_text(planted, passage);
  pftest::write_file(p("question.txt"), question);
  const auto r = pftest::run_command(cli("retrieve --corpus " + p("corpus.jsonl") + " --index " + p("r.bin") +
                                         " --k 1 --question \"$(cat " + p("question.txt") + ")\""));
  ASSERT_EQ(r.exit_code, 0);
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 2U);
  EXPECT_EQ(lines[0], "conversation_id\tturn\trank\tscore\tpassage_id\tstart\tend\tsurface");
  std::istringstream row(lines[1]);
  std::string cid, turn, rank, score, pid, start, end;
  std::getline(row, cid, '\t');
  std::getline(row, turn, '\t');
  std::getline(row, rank, '\t');
  std::getline(row, score, '\t');
  std::getline(row, pid, '\t');
  std::getline(row, start, '\t');
  std::getline(row, end, '\t');
  EXPECT_EQ(pid, passage.passage_id);
  EXPECT_EQ(std::stoul(start), planted.start_token);
  EXPECT_EQ(std::stoul(end), planted.end_token);
  EXPECT_EQ(rank, "1");

  std::string conv;
  for (int t = 1; t <= 3; ++t) {
    conv += R"({"conversation_id":"z","turn_index":)" + std::to_string(t) +
            R"(,"question":"who founded it","gold_answer":"x"})" + "\n";
  }
  pftest::write_file(p("conv3.jsonl"), conv);
  const auto c = pftest::run_command(cli("retrieve --corpus " + p("corpus.jsonl") + " --index " + p("r.bin") +
                                         " --k 1 --conversation " + p("conv3.jsonl")));
  ASSERT_EQ(c.exit_code, 0);
  EXPECT_EQ(lines_of(c.out).size(), 4U);
}

TEST_F(CliTest, EvalOfPerfectQuestionsScoresOne) {
  ASSERT_EQ(pftest::run_command(cli("index --corpus " + p("corpus.jsonl") + " --out " + p("e.bin"))).exit_code, 0);
  const auto corpus = load_corpus(p("corpus.jsonl"));
  // Each question is the composed text of a distinct answer-bearing span, so
  // with the identity head the span's own vector is the unique maximum.
  std::string conv;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& passage = corpus.passages()[i];
    const auto spans = enumerate_phrase_spans(passage, 20);
    const auto& s = spans[7 + i];
    nlohmann::json rec = {{"conversation_id", "perfect-" + std::to_string(i)},
                          {"turn_index", 1},
                          {"question", compose_phrase_text(s, passage)},
                          {"gold_answer", s.surface},
                          {"gold_passage_id", passage.passage_id}};
    conv += rec.dump() + "\n";
  }
  pftest::write_file(p("perfect.jsonl"), conv);
  const auto r = pftest::run_command(cli("eval --corpus " + p("corpus.jsonl") + " --conversations " +
                                         p("perfect.jsonl") + " --index " + p("e.bin") + " --out " +
                                         p("perfect_report.json") + " --table " + p("perfect.tsv")));
  ASSERT_EQ(r.exit_code, 0);
  const auto report = nlohmann::json::parse(pftest::read_file(p("perfect_report.json")));
  EXPECT_DOUBLE_EQ(report["f1"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(report["em"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(report["top_k_accuracy"]["1"].get<double>(), 1.0);
  const auto table = lines_of(pftest::read_file(p("perfect.tsv")));
  ASSERT_EQ(table.size(), 2U);
  EXPECT_EQ(table[0], "system\tF1\tEM\tTop-1\tTop-5\tTop-20\tMRR@10\tP@10");
}

TEST_F(CliTest, BenchReportsTwoSystems) {
  ASSERT_EQ(pftest::run_command(cli("index --corpus " + p("corpus.jsonl") + " --out " + p("bn.bin"))).exit_code, 0);
  const auto r = pftest::run_command(cli("bench --corpus " + p("corpus.jsonl") + " --conversations " +
                                         p("transfer.jsonl") + " --index " + p("bn.bin") +
                                         " --reps 1 --warmup 0 --out " + p("bench.json") + " --table " +
                                         p("bench.tsv")));
  ASSERT_EQ(r.exit_code, 0);
  const auto report = nlohmann::json::parse(pftest::read_file(p("bench.json")));
  ASSERT_EQ(report["systems"].size(), 2U);
  EXPECT_EQ(report["systems"][1]["baseline"], true);
  EXPECT_EQ(lines_of(pftest::read_file(p("bench.tsv"))).size(), 3U);
}

TEST_F(CliTest, AblateWritesFourRows) {
  const auto r = pftest::run_command(cli("ablate --corpus " + p("corpus.jsonl") + " --conversations " +
                                         p("transfer.jsonl") + " --out " + p("ablation")));
  ASSERT_EQ(r.exit_code, 0);
  const auto rows = nlohmann::json::parse(pftest::read_file(p("ablation/ablation.json")));
  ASSERT_EQ(rows.size(), 4U);
  const auto table = lines_of(pftest::read_file(p("ablation/ablation.tsv")));
  ASSERT_EQ(table.size(), 5U);
  EXPECT_EQ(table[1].substr(0, 5), "full\t");
  EXPECT_EQ(table[4].substr(0, 12), "w/o CL & QF\t");
}

TEST_F(CliTest, FinetuneAndIngestRoundTrip) {
  ASSERT_EQ(pftest::run_command(cli("ingest --corpus " + p("corpus.jsonl") + " --conversations " +
                                    p("conversations.jsonl") + " --out " + p("ingested")))
                .exit_code,
            0);
  EXPECT_EQ(pftest::read_file(p("ingested/corpus.jsonl")), pftest::read_file(p("corpus.jsonl")));
  ASSERT_EQ(pftest::run_command(cli("train --corpus " + p("corpus.jsonl") + " --conversations " +
                                    p("conversations.jsonl") + " --out " + p("ft_in.bin")))
                .exit_code,
            0);
  ASSERT_EQ(pftest::run_command(cli("index --corpus " + p("corpus.jsonl") + " --head " + p("ft_in.bin") +
                                    " --out " + p("ft.idx")))
                .exit_code,
            0);
  ASSERT_EQ(pftest::run_command(cli("finetune-query --corpus " + p("corpus.jsonl") + " --conversations " +
                                    p("conversations.jsonl") + " --index " + p("ft.idx") + " --head " +
                                    p("ft_in.bin") + " --out " + p("ft_out.bin")))
                .exit_code,
            0);
  const auto before = load_head(p("ft_in.bin"));
  const auto after = load_head(p("ft_out.bin"));
  EXPECT_EQ(before.phrase_start, after.phrase_start);
  EXPECT_NE(before.query_start, after.query_start);
  ASSERT_EQ(pftest::run_command(cli("finetune-query --corpus " + p("corpus.jsonl") + " --head " +
                                    p("ft_in.bin") + " --out " + p("ft_copy.bin") + " --no-query-finetune"))
                .exit_code,
            0);
  EXPECT_EQ(pftest::read_file(p("ft_copy.bin")), pftest::read_file(p("ft_in.bin")));
}

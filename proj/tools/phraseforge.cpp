// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

// phraseforge command-line entry point.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "phraseforge/baselines.hpp"
#include "phraseforge/corpus.hpp"
#include "phraseforge/encoder.hpp"
#include "phraseforge/engine.hpp"
#include "phraseforge/errors.hpp"
#include "phraseforge/eval.hpp"
#include "phraseforge/phrase_index.hpp"
#include "phraseforge/remote_encoder.hpp"
#include "phraseforge/synthetic.hpp"
#include "phraseforge/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace phraseforge::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr const char* kEndpointEnv = "PHRASEFORGE_ENCODER_ENDPOINT";

// A failure with a short fixed cause and an optional detail (usually a path).
class CommandError : public std::runtime_error {
 public:
  CommandError(int exit_code, std::string cause, std::string detail = {})
      : std::runtime_error(cause), exit_code_(exit_code), cause_(std::move(cause)),
        detail_(std::move(detail)) {}
  int exit_code() const { return exit_code_; }
  const std::string& cause() const { return cause_; }
  const std::string& detail() const { return detail_; }

 private:
  int exit_code_;
  std::string cause_;
  std::string detail_;
};

struct Globals {
  std::uint64_t seed = 7;
  std::size_t dim = kDefaultDim;
  std::string config;
  bool verbose = false;
  bool seed_set = false;
  bool dim_set = false;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::is_regular_file(path)) {
    throw CommandError(kExitUsage, what + " not found", path);
  }
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_output(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CommandError(kExitRuntime, "cannot write output", path.string());
  return out;
}

void write_json(const fs::path& path, const json& value) {
  auto out = open_output(path);
  out << value.dump(2) << '\n';
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

// Wall-clock stamp for manifests; SOURCE_DATE_EPOCH pins it for reproducible builds.
std::string build_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

TrainConfig resolve_config(const Globals& g) {
  TrainConfig cfg;
  if (!g.config.empty()) {
    require_file(g.config, "config");
    cfg = load_train_config(g.config, cfg);
  }
  if (g.seed_set || g.config.empty()) cfg.seed = g.seed;
  if (g.dim_set || g.config.empty()) cfg.dim = g.dim;
  cfg.validate();
  return cfg;
}

std::unique_ptr<EncoderProvider> make_provider(const TrainConfig& cfg) {
  const char* endpoint = std::getenv(kEndpointEnv);
  if (endpoint == nullptr || *endpoint == '\0') {
    return std::make_unique<FeaturizerProvider>(cfg.dim, cfg.seed);
  }
  spdlog::info("using remote encoder at {}", endpoint);
  auto channel = connect_tcp(parse_endpoint(endpoint), std::chrono::milliseconds(10000));
  return std::make_unique<RemoteProvider>(std::move(channel), cfg.dim);
}

Corpus read_corpus(const std::string& path) {
  require_file(path, "corpus");
  auto corpus = load_corpus(path);
  spdlog::info("corpus: {} passages, fingerprint {}", corpus.size(), hex64(corpus.fingerprint()));
  return corpus;
}

std::vector<Conversation> read_conversations(const std::string& path) {
  require_file(path, "conversations");
  auto convs = load_conversations(path);
  spdlog::info("conversations: {} from {}", convs.size(), path);
  return convs;
}

ProjectionHead read_head_or_identity(const std::string& path, std::size_t dim) {
  if (path.empty()) return ProjectionHead::identity(dim);
  require_file(path, "head");
  auto head = load_head(path);
  if (head.dim() != dim) {
    throw ConfigError("head dim " + std::to_string(head.dim()) + " != configured dim " +
                      std::to_string(dim));
  }
  return head;
}

PhraseIndex read_index(const std::string& path, const Corpus& corpus, const ProjectionHead& head) {
  require_file(path, "index");
  auto index = load_index(path, corpus);
  if (index.dim() != head.dim()) {
    throw ConfigError("index dim " + std::to_string(index.dim()) + " != head dim " +
                      std::to_string(head.dim()));
  }
  return index;
}

std::vector<EncodedExample> prepare_examples(std::span<const Conversation> convs,
                                             const Corpus& corpus, EncoderProvider& provider,
                                             const TrainConfig& cfg) {
  auto set = make_training_examples(convs, corpus, cfg.token_budget);
  for (const auto& id : set.skipped) spdlog::warn("skipping turn {}: no answer span", id);
  spdlog::info("training examples: {} ({} skipped)", set.examples.size(), set.skipped.size());
  return encode_examples(set.examples, corpus, provider);
}

void write_trajectory_file(const fs::path& path, std::span<const StepRecord> trajectory) {
  auto out = open_output(path);
  write_trajectory(out, trajectory);
}

json report_json(const EvalReport& r, const std::string& system) {
  json topk = json::object();
  for (const auto& [k, v] : r.top_k_accuracy) topk[std::to_string(k)] = v;
  return {{"system", system},
          {"f1", r.f1},
          {"em", r.em},
          {"top_k_accuracy", topk},
          {"mrr_at_10", r.mrr_at_10},
          {"precision_at_10", r.precision_at_10},
          {"n_questions", r.n_questions},
          {"n_retrieval_excluded", r.n_retrieval_excluded},
          {"cutoff", r.cutoff}};
}

std::string fmt4(double v) { return fmt::format("{:.4f}", v); }

double topk_or_zero(const EvalReport& r, std::size_t k) {
  const auto it = r.top_k_accuracy.find(k);
  return it == r.top_k_accuracy.end() ? 0.0 : it->second;
}

constexpr std::size_t kReportKs[] = {1, 5, 20};

void write_eval_table(std::ostream& out, std::span<const std::pair<std::string, EvalReport>> rows) {
  out << "system\tF1\tEM\tTop-1\tTop-5\tTop-20\tMRR@10\tP@10\n";
  for (const auto& [name, r] : rows) {
    out << name << '\t' << fmt4(r.f1) << '\t' << fmt4(r.em) << '\t' << fmt4(topk_or_zero(r, 1))
        << '\t' << fmt4(topk_or_zero(r, 5)) << '\t' << fmt4(topk_or_zero(r, 20)) << '\t'
        << fmt4(r.mrr_at_10) << '\t' << fmt4(r.precision_at_10) << '\n';
  }
}

void write_predictions(const fs::path& path, std::span<const TurnPrediction> preds) {
  auto out = open_output(path);
  for (const auto& p : preds) {
    json rec = {{"conversation_id", p.conversation_id},
                {"turn_index", p.turn_index},
                {"prediction", p.answer.prediction},
                {"gold_answer", p.gold_answer},
                {"score", p.answer.score},
                {"ranked_passages", p.answer.ranked_passages}};
    if (p.answer.source_passage_id) rec["source_passage_id"] = *p.answer.source_passage_id;
    if (p.gold_passage_id) rec["gold_passage_id"] = *p.gold_passage_id;
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string corpus;
  std::string conversations;
  std::string out;
  bool synthetic = false;
};

int cmd_ingest(const Globals& g, const IngestArgs& a) {
  const TrainConfig cfg = resolve_config(g);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  if (a.synthetic) {
    synthetic::Options opts;
    opts.seed = cfg.seed;
    const auto bench = synthetic::generate(opts);
    synthetic::write_benchmark(bench, dir);
    spdlog::info("wrote synthetic benchmark: {} passages, {} + {} turns to {}",
                 bench.passages.size(), bench.conversations.size(), bench.transfer.size(),
                 dir.string());
    return kExitOk;
  }
  const Corpus corpus = read_corpus(a.corpus);
  std::size_t tokens = 0;
  std::size_t spans = 0;
  {
    auto out = open_output(dir / "corpus.jsonl");
    for (const auto& p : corpus.passages()) {
      tokens += p.tokens.size();
      spans += phrase_span_count(p.tokens.size(), cfg.max_phrase_len);
      out << json{{"passage_id", p.passage_id}, {"title", p.title}, {"text", p.text}}.dump()
          << '\n';
    }
  }
  json summary = {{"passages", corpus.size()},
                  {"tokens", tokens},
                  {"phrase_spans", spans},
                  {"max_phrase_len", cfg.max_phrase_len},
                  {"fingerprint", hex64(corpus.fingerprint())}};
  if (!a.conversations.empty()) {
    const auto convs = read_conversations(a.conversations);
    const auto set = make_training_examples(convs, corpus, cfg.token_budget);
    auto out = open_output(dir / "conversations.jsonl");
    std::size_t turns = 0;
    for (const auto& t : flatten(convs)) {
      ++turns;
      json rec = {{"conversation_id", t.conversation_id},
                  {"turn_index", t.turn_index},
                  {"question", t.question},
                  {"gold_answer", t.gold_answer}};
      if (t.gold_passage_id) rec["gold_passage_id"] = *t.gold_passage_id;
      out << rec.dump() << '\n';
    }
    summary["conversations"] = convs.size();
    summary["turns"] = turns;
    summary["answerable_turns"] = set.examples.size();
    summary["unanswerable_turns"] = set.skipped;
  }
  write_json(dir / "ingest.json", summary);
  spdlog::info("ingested {} passages into {}", corpus.size(), dir.string());
  return kExitOk;
}

// ---------------------------------------------------------------- index

struct IndexArgs {
  std::string corpus;
  std::string head;
  std::string out;
  std::string manifest;
};

int cmd_index(const Globals& g, const IndexArgs& a) {
  const TrainConfig cfg = resolve_config(g);
  const Corpus corpus = read_corpus(a.corpus);
  const ProjectionHead head = read_head_or_identity(a.head, cfg.dim);
  auto provider = make_provider(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const PhraseIndex index = build_index(corpus, head, *provider, cfg.max_phrase_len);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ensure_parent(a.out);
  save_index(index, a.out);
  const std::string manifest = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  write_json(manifest, {{"dim", index.dim()},
                        {"entries", index.size()},
                        {"passages", index.passage_ids().size()},
                        {"max_phrase_len", cfg.max_phrase_len},
                        {"fingerprint", hex64(index.fingerprint())},
                        {"built_at", build_timestamp()}});
  spdlog::info("indexed {} phrases (dim {}) in {:.2f}s -> {}", index.size(), index.dim(), secs,
               a.out);
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string corpus;
  std::string conversations;
  std::string init_head;
  std::string out;
  std::string trajectory;
  bool no_turn_loss = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  TrainConfig cfg = resolve_config(g);
  if (a.no_turn_loss) cfg.lambda2 = 0.0;
  const Corpus corpus = read_corpus(a.corpus);
  const auto convs = read_conversations(a.conversations);
  auto provider = make_provider(cfg);
  const auto dataset = prepare_examples(convs, corpus, *provider, cfg);
  const fs::path trajectory = a.trajectory.empty() ? a.out + ".trajectory.jsonl" : a.trajectory;
  try {
    const auto result = train(dataset, cfg, read_head_or_identity(a.init_head, cfg.dim));
    ensure_parent(a.out);
    save_head(result.head, a.out);
    write_trajectory_file(trajectory, result.trajectory);
    if (!result.trajectory.empty()) {
      const auto& first = result.trajectory.front().loss;
      const auto& last = result.trajectory.back().loss;
      spdlog::info("trained {} steps: l_neg {:.4f} -> {:.4f}, l_turn {:.4f} -> {:.4f}",
                   result.trajectory.size(), first.l_neg, last.l_neg, first.l_turn, last.l_turn);
    }
  } catch (const TrainingDiverged& e) {
    write_trajectory_file(trajectory, e.trajectory());
    throw;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- finetune-query

struct FinetuneArgs {
  std::string corpus;
  std::string conversations;
  std::string index;
  std::string head;
  std::string out;
  std::string trajectory;
  bool skip = false;
};

int cmd_finetune(const Globals& g, const FinetuneArgs& a) {
  const TrainConfig cfg = resolve_config(g);
  const Corpus corpus = read_corpus(a.corpus);
  const ProjectionHead head = read_head_or_identity(a.head, cfg.dim);
  ensure_parent(a.out);
  if (a.skip) {
    spdlog::info("query-side fine-tuning disabled; head copied unchanged");
    save_head(head, a.out);
    return kExitOk;
  }
  const auto convs = read_conversations(a.conversations);
  const PhraseIndex index = read_index(a.index, corpus, head);
  auto provider = make_provider(cfg);
  const auto dataset = prepare_examples(convs, corpus, *provider, cfg);
  const fs::path trajectory = a.trajectory.empty() ? a.out + ".trajectory.jsonl" : a.trajectory;
  try {
    const auto result = finetune_query(index, dataset, cfg, head);
    save_head(result.head, a.out);
    write_trajectory_file(trajectory, result.trajectory);
    spdlog::info("query-side fine-tuning: {} steps", result.trajectory.size());
  } catch (const TrainingDiverged& e) {
    write_trajectory_file(trajectory, e.trajectory());
    throw;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- retrieve

struct RetrieveArgs {
  std::string corpus;
  std::string index;
  std::string head;
  std::optional<std::string> question;
  std::string conversation;
  std::size_t k = kDefaultSearchK;
};

void print_ranked(const std::string& conv_id, int turn, std::span<const RankedPhrase> ranked) {
  for (const auto& r : ranked) {
    std::cout << conv_id << '\t' << turn << '\t' << r.rank << '\t' << fmt::format("{:.6f}", r.score)
              << '\t' << r.span.passage_id << '\t' << r.span.start_token << '\t'
              << r.span.end_token << '\t' << r.span.surface << '\n';
  }
}

int cmd_retrieve(const Globals& g, const RetrieveArgs& a) {
  if (a.question.has_value() == !a.conversation.empty()) {
    throw CommandError(kExitUsage, "exactly one of --question or --conversation is required");
  }
  if (a.k < 1) throw ConfigError("k must be >= 1");
  const TrainConfig cfg = resolve_config(g);
  const Corpus corpus = read_corpus(a.corpus);
  const ProjectionHead head = read_head_or_identity(a.head, cfg.dim);
  const PhraseIndex index = read_index(a.index, corpus, head);
  auto provider = make_provider(cfg);
  const SingleStageEngine engine(index, head, *provider, a.k);

  std::cout << "conversation_id\tturn\trank\tscore\tpassage_id\tstart\tend\tsurface\n";
  if (a.question) {
    Conversation conv{"question", {ConversationTurn{"question", 1, *a.question, "", std::nullopt}}};
    print_ranked(conv.conversation_id, 1, engine.answer(build_conv_context(conv, 1)));
    return kExitOk;
  }
  // Each turn's context carries the system's own earlier answers.
  for (const auto& conv : read_conversations(a.conversation)) {
    std::vector<std::string> predicted;
    for (const auto& turn : conv.turns) {
      const auto ctx = build_conv_context(conv, turn.turn_index, cfg.token_budget, predicted);
      const auto ranked = engine.answer(ctx);
      print_ranked(conv.conversation_id, turn.turn_index, ranked);
      predicted.push_back(ranked.empty() ? std::string() : ranked.front().span.surface);
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string corpus;
  std::string conversations;
  std::string index;
  std::string head;
  std::string pipeline = "none";
  std::string history = "gold";
  std::size_t topk_passages = kDefaultTopKPassages;
  std::size_t cutoff = kDefaultCutoff;
  std::string out;
  std::string table;
  std::string predictions;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  if (a.cutoff < 1) throw ConfigError("cutoff must be >= 1");
  const TrainConfig cfg = resolve_config(g);
  const Corpus corpus = read_corpus(a.corpus);
  const auto convs = read_conversations(a.conversations);
  const ProjectionHead head = read_head_or_identity(a.head, cfg.dim);
  const PhraseIndex index = read_index(a.index, corpus, head);
  auto provider = make_provider(cfg);
  const HistoryMode mode = a.history == "predicted" ? HistoryMode::kPredicted : HistoryMode::kGold;

  std::string system = "single-stage";
  std::vector<TurnPrediction> preds;
  if (a.pipeline == "none") {
    const SingleStageEngine engine(index, head, *provider);
    preds = run_conversations(convs, single_stage_answerer(engine, a.cutoff), mode,
                              cfg.token_budget);
  } else {
    const RetrieverKind kind = a.pipeline == "bm25" ? RetrieverKind::kBm25 : RetrieverKind::kDense;
    system = a.pipeline + "-pipeline";
    const Pipeline pipeline(corpus, head, *provider, kind, &index, a.topk_passages,
                            cfg.max_phrase_len);
    preds = run_conversations(convs, pipeline_answerer(pipeline), mode, cfg.token_budget);
  }
  const auto records = to_records(preds);
  const EvalReport report = make_eval_report(records, a.cutoff, kReportKs);
  json out = report_json(report, system);
  out["history"] = a.history;
  const std::string path = a.out.empty() ? "eval_report.json" : a.out;
  write_json(path, out);
  if (!a.table.empty()) {
    auto t = open_output(a.table);
    const std::pair<std::string, EvalReport> row{system, report};
    write_eval_table(t, std::span(&row, 1));
  }
  if (!a.predictions.empty()) write_predictions(a.predictions, preds);
  spdlog::info("{}: F1 {:.4f} EM {:.4f} MRR@{} {:.4f} over {} questions", system, report.f1,
               report.em, a.cutoff, report.mrr_at_10, report.n_questions);
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string corpus;
  std::string conversations;
  std::string index;
  std::string head;
  std::size_t topk_passages = kDefaultTopKPassages;
  std::size_t reps = 5;
  std::size_t warmup = 2;
  std::string out;
  std::string table;
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
  const TrainConfig cfg = resolve_config(g);
  const Corpus corpus = read_corpus(a.corpus);
  const auto convs = read_conversations(a.conversations);
  const ProjectionHead head = read_head_or_identity(a.head, cfg.dim);
  const PhraseIndex index = read_index(a.index, corpus, head);
  auto provider = make_provider(cfg);

  std::vector<ConvContext> contexts;
  for (const auto& conv : convs) {
    for (const auto& turn : conv.turns) {
      contexts.push_back(build_conv_context(conv, turn.turn_index, cfg.token_budget));
    }
  }
  const SingleStageEngine engine(index, head, *provider);
  const Pipeline pipeline(corpus, head, *provider, RetrieverKind::kBm25, &index, a.topk_passages,
                          cfg.max_phrase_len);
  const std::vector<BenchSystem> systems = {
      {"single-stage", [&](std::size_t i) { (void)engine.answer(contexts[i]); }, false},
      {"bm25-pipeline", [&](std::size_t i) { (void)pipeline.answer(contexts[i]); }, true},
  };
  const LatencyReport report = bench_latency(systems, contexts.size(), a.warmup, a.reps);

  json rows = json::array();
  for (const auto& r : report.rows) {
    json row = {{"system", r.name},
                {"baseline", r.baseline},
                {"failed", r.failed},
                {"median_seconds", r.median_seconds},
                {"relative_time", r.relative_time},
                {"questions_per_sec", r.questions_per_sec}};
    if (r.failed) row["failure"] = r.failure;
    rows.push_back(row);
    spdlog::info("{}: {:.2f} questions/sec, relative time {:.2f}", r.name, r.questions_per_sec,
                 r.relative_time);
  }
  write_json(a.out.empty() ? "bench_report.json" : a.out,
             {{"systems", rows},
              {"n_questions", report.n_questions},
              {"repetitions", report.repetitions},
              {"warmup", report.warmup}});
  if (!a.table.empty()) {
    auto t = open_output(a.table);
    t << "system\tRelative Time\t#Q/sec\n";
    for (const auto& r : report.rows) {
      t << r.name << (r.baseline ? " (baseline)" : "") << '\t'
        << (r.failed ? "failed" : fmt::format("{:.2f}", r.relative_time)) << '\t'
        << (r.failed ? "failed" : fmt::format("{:.2f}", r.questions_per_sec)) << '\n';
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string corpus;
  std::string conversations;
  std::string finetune_conversations;
  std::string out;
};

int cmd_ablate(const Globals& g, const AblateArgs& a) {
  const TrainConfig cfg = resolve_config(g);
  const Corpus corpus = read_corpus(a.corpus);
  const auto convs = read_conversations(a.conversations);
  const auto ft_convs = a.finetune_conversations.empty()
                            ? convs
                            : read_conversations(a.finetune_conversations);
  auto provider = make_provider(cfg);
  const auto dataset = prepare_examples(convs, corpus, *provider, cfg);
  const auto ft_dataset = a.finetune_conversations.empty()
                              ? dataset
                              : prepare_examples(ft_convs, corpus, *provider, cfg);
  const auto features = compute_phrase_features(corpus, *provider, cfg.max_phrase_len);

  std::vector<std::pair<std::string, EvalReport>> rows;
  json records = json::array();
  for (const bool cl : {true, false}) {
    TrainConfig c = cfg;
    if (!cl) c.lambda2 = 0.0;
    const auto trained = train(dataset, c, ProjectionHead::identity(c.dim));
    const PhraseIndex index = index_from_features(features, trained.head);
    for (const bool qf : {true, false}) {
      const ProjectionHead head = qf ? finetune_query(index, ft_dataset, c, trained.head).head
                                     : trained.head;
      const SingleStageEngine engine(index, head, *provider);
      const auto preds = run_conversations(convs, single_stage_answerer(engine), HistoryMode::kGold,
                                           c.token_budget);
      const auto report = make_eval_report(to_records(preds), kDefaultCutoff, kReportKs);
      std::string name = cl && qf ? "full" : cl ? "w/o QF" : qf ? "w/o CL" : "w/o CL & QF";
      json rec = report_json(report, name);
      rec["contrastive_turn_loss"] = cl;
      rec["query_finetune"] = qf;
      records.push_back(rec);
      rows.emplace_back(std::move(name), report);
      spdlog::info("ablation CL={} QF={}: F1 {:.4f} EM {:.4f}", cl, qf, report.f1, report.em);
    }
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_json(dir / "ablation.json", records);
  auto t = open_output(dir / "ablation.tsv");
  write_eval_table(t, rows);
  return kExitOk;
}

// ---------------------------------------------------------------- main

void print_error(int code, const std::string& cause, const std::string& detail) {
  json line = {{"status", "error"}, {"exit_code", code}, {"cause", cause}};
  if (!detail.empty()) line["detail"] = detail;
  std::cerr << line.dump() << std::endl;
}

int run(int argc, char** argv) {
  CLI::App app{"phraseforge: single-stage conversational phrase retrieval"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice")->capture_default_str();
  app.add_option("--dim", g.dim, "embedding dimension")->capture_default_str();
  app.add_option("--config", g.config, "key = value training config file");
  app.add_flag("-v,--verbose", g.verbose, "debug logging");

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "validate and canonicalize input files");
  s_ingest->add_option("--corpus", ingest.corpus, "passage JSONL");
  s_ingest->add_option("--conversations", ingest.conversations, "conversation-turn JSONL");
  s_ingest->add_option("--out", ingest.out, "output directory")->required();
  s_ingest->add_flag("--synthetic", ingest.synthetic, "generate the synthetic benchmark instead");

  IndexArgs index;
  auto* s_index = app.add_subcommand("index", "build and save the phrase index");
  s_index->add_option("--corpus", index.corpus, "passage JSONL")->required();
  s_index->add_option("--head", index.head, "projection head (default: identity)");
  s_index->add_option("--out", index.out, "index file")->required();
  s_index->add_option("--manifest", index.manifest, "manifest path (default: <out>.manifest.json)");

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "train the projection head");
  s_train->add_option("--corpus", tr.corpus, "passage JSONL")->required();
  s_train->add_option("--conversations", tr.conversations, "training conversations")->required();
  s_train->add_option("--init-head", tr.init_head, "starting head (default: identity)");
  s_train->add_option("--out", tr.out, "head file")->required();
  s_train->add_option("--trajectory", tr.trajectory, "loss trajectory JSONL");
  s_train->add_flag("--no-turn-loss", tr.no_turn_loss, "drop the turn-dependency loss");

  FinetuneArgs ft;
  auto* s_ft = app.add_subcommand("finetune-query", "query-side fine-tuning on a frozen index");
  s_ft->add_option("--corpus", ft.corpus, "passage JSONL")->required();
  s_ft->add_option("--conversations", ft.conversations, "fine-tuning conversations");
  s_ft->add_option("--index", ft.index, "frozen phrase index");
  s_ft->add_option("--head", ft.head, "trained head")->required();
  s_ft->add_option("--out", ft.out, "fine-tuned head file")->required();
  s_ft->add_option("--trajectory", ft.trajectory, "loss trajectory JSONL");
  s_ft->add_flag("--no-query-finetune", ft.skip, "copy the head unchanged");

  RetrieveArgs rt;
  auto* s_rt = app.add_subcommand("retrieve", "answer a question or a conversation file");
  s_rt->add_option("--corpus", rt.corpus, "passage JSONL")->required();
  s_rt->add_option("--index", rt.index, "phrase index")->required();
  s_rt->add_option("--head", rt.head, "projection head (default: identity)");
  s_rt->add_option("--question", rt.question, "single question");
  s_rt->add_option("--conversation", rt.conversation, "conversation-turn JSONL");
  s_rt->add_option("--k", rt.k, "phrases per turn")->capture_default_str();

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "answer and retrieval metrics");
  s_ev->add_option("--corpus", ev.corpus, "passage JSONL")->required();
  s_ev->add_option("--conversations", ev.conversations, "evaluation conversations")->required();
  s_ev->add_option("--index", ev.index, "phrase index")->required();
  s_ev->add_option("--head", ev.head, "projection head (default: identity)");
  s_ev->add_option("--pipeline", ev.pipeline, "two-stage baseline instead of single-stage")
      ->check(CLI::IsMember({"none", "bm25", "dense"}))
      ->capture_default_str();
  s_ev->add_option("--history", ev.history, "answers placed in the history")
      ->check(CLI::IsMember({"gold", "predicted"}))
      ->capture_default_str();
  s_ev->add_option("--topk-passages", ev.topk_passages, "passages read by the pipeline")
      ->capture_default_str();
  s_ev->add_option("--cutoff", ev.cutoff, "MRR and precision cutoff")->capture_default_str();
  s_ev->add_option("--out", ev.out, "report JSON (default: eval_report.json)");
  s_ev->add_option("--table", ev.table, "tab-separated table");
  s_ev->add_option("--predictions", ev.predictions, "per-turn predictions JSONL");

  BenchArgs bn;
  auto* s_bn = app.add_subcommand("bench", "latency of single-stage vs BM25 pipeline");
  s_bn->add_option("--corpus", bn.corpus, "passage JSONL")->required();
  s_bn->add_option("--conversations", bn.conversations, "questions to time")->required();
  s_bn->add_option("--index", bn.index, "phrase index")->required();
  s_bn->add_option("--head", bn.head, "projection head (default: identity)");
  s_bn->add_option("--topk-passages", bn.topk_passages, "passages read by the pipeline")
      ->capture_default_str();
  s_bn->add_option("--reps", bn.reps, "timed repetitions")->capture_default_str();
  s_bn->add_option("--warmup", bn.warmup, "untimed warmup passes")->capture_default_str();
  s_bn->add_option("--out", bn.out, "report JSON (default: bench_report.json)");
  s_bn->add_option("--table", bn.table, "tab-separated table");

  AblateArgs ab;
  auto* s_ab = app.add_subcommand("ablate", "turn loss x query fine-tuning grid");
  s_ab->add_option("--corpus", ab.corpus, "passage JSONL")->required();
  s_ab->add_option("--conversations", ab.conversations, "train and eval conversations")
      ->required();
  s_ab->add_option("--finetune-conversations", ab.finetune_conversations,
                   "query fine-tuning conversations (default: --conversations)");
  s_ab->add_option("--out", ab.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(kExitUsage, "usage error", e.what());
    return kExitUsage;
  }
  g.seed_set = app.count("--seed") > 0;
  g.dim_set = app.count("--dim") > 0;

  auto logger = spdlog::stderr_color_mt("phraseforge");
  spdlog::set_default_logger(logger);
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*s_ingest) {
      if (!ingest.synthetic && ingest.corpus.empty()) {
        throw CommandError(kExitUsage, "corpus not found", "--corpus is required");
      }
      return cmd_ingest(g, ingest);
    }
    if (*s_index) return cmd_index(g, index);
    if (*s_train) return cmd_train(g, tr);
    if (*s_ft) {
      if (!ft.skip && (ft.conversations.empty() || ft.index.empty())) {
        throw CommandError(kExitUsage, "--conversations and --index are required");
      }
      return cmd_finetune(g, ft);
    }
    if (*s_rt) return cmd_retrieve(g, rt);
    if (*s_ev) return cmd_eval(g, ev);
    if (*s_bn) return cmd_bench(g, bn);
    if (*s_ab) return cmd_ablate(g, ab);
  } catch (const CommandError& e) {
    print_error(e.exit_code(), e.cause(), e.detail());
    return e.exit_code();
  } catch (const ConfigError& e) {
    print_error(kExitUsage, e.what(), "");
    return kExitUsage;
  } catch (const std::exception& e) {
    print_error(kExitRuntime, e.what(), "");
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace
}  // namespace phraseforge::cli

int main(int argc, char** argv) { return phraseforge::cli::run(argc, argv); }

// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "phraseforge/eval.hpp"
#include "phraseforge/hash.hpp"

namespace phraseforge {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double dot(const DualVector& a, const DualVector& b) {
  return a.start.dot(b.start) + a.end.dot(b.end);
}

/// Softmax cross-entropy over `logits` with the target at `target`. Writes
/// d(loss)/d(logit) into `grad`.
double cross_entropy(const std::vector<double>& logits, std::size_t target,
                     std::vector<double>& grad) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z - peak);
  const double lse = peak + std::log(denom);
  grad.resize(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) grad[j] = std::exp(logits[j] - lse);
  grad[target] -= 1.0;
  return lse - logits[target];
}

void require_finite(double value, const std::string& what, const std::string& example_id) {
  if (!std::isfinite(value)) {
    throw NumericError("non-finite " + what + " for example " + example_id);
  }
}

struct NegTerm {
  double loss = 0.0;
  ProjectionHead grad;
};

NegTerm neg_term(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                 const ProjectionHead& head, bool want_grad) {
  const std::size_t b = batch.size();
  if (b < 2) throw ConfigError("loss_neg needs a batch of at least 2 examples");
  const auto queued = queue.entries();
  std::vector<QueryEmbedding> queries;
  std::vector<PhraseEmbedding> phrases;
  for (const auto& ex : batch) {
    queries.push_back(project_query(head, ex.ctx));
    phrases.push_back(project_phrase(head, ex.phrase));
  }
  NegTerm out{0.0, ProjectionHead::zeros(head.dim())};
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<double> logits(b + queued.size());
  std::vector<double> g;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) logits[j] = dot(queries[i], phrases[j]);
    for (std::size_t m = 0; m < queued.size(); ++m) logits[b + m] = dot(queries[i], *queued[m]);
    for (double z : logits) require_finite(z, "score", batch[i].id);
    out.loss += inv_b * cross_entropy(logits, i, g);
    if (!want_grad) continue;
    // d/dWq_start of u_i . v_j = v_j.start x_i.start^T; queue vectors are constants.
    VectorXd pull_start = VectorXd::Zero(static_cast<Eigen::Index>(head.dim()));
    VectorXd pull_end = pull_start;
    for (std::size_t j = 0; j < b; ++j) {
      const double w = inv_b * g[j];
      pull_start += w * phrases[j].start;
      pull_end += w * phrases[j].end;
      out.grad.phrase_start += w * queries[i].start * batch[j].phrase.start.transpose();
      out.grad.phrase_end += w * queries[i].end * batch[j].phrase.end.transpose();
    }
    for (std::size_t m = 0; m < queued.size(); ++m) {
      const double w = inv_b * g[b + m];
      pull_start += w * queued[m]->start;
      pull_end += w * queued[m]->end;
    }
    out.grad.query_start += pull_start * batch[i].ctx.start.transpose();
    out.grad.query_end += pull_end * batch[i].ctx.end.transpose();
  }
  return out;
}

struct TurnTerm {
  TurnLoss loss;
  ProjectionHead grad;
};

TurnTerm turn_term(std::span<const EncodedExample> batch, const ProjectionHead& head,
                   bool want_grad) {
  const std::size_t b = batch.size();
  TurnTerm out{{}, ProjectionHead::zeros(head.dim())};
  std::vector<QueryEmbedding> current;
  for (const auto& ex : batch) current.push_back(project_query(head, ex.ctx));
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < b; ++i) {
    if (batch[i].prev) eligible.push_back(i);
  }
  out.loss.eligible = eligible.size();
  if (eligible.empty()) return out;
  if (b < 2) throw ConfigError("loss_turn needs a batch of at least 2 examples");

  const double inv_e = 1.0 / static_cast<double>(eligible.size());
  std::vector<double> logits(b);
  std::vector<double> g;
  // Accumulated coefficient matrices: the gradient of anchor . candidate with
  // respect to W is W (z x^T + x z^T), gathered here before multiplying by W.
  const auto d = static_cast<Eigen::Index>(head.dim());
  MatrixXd sym_start = MatrixXd::Zero(d, d);
  MatrixXd sym_end = MatrixXd::Zero(d, d);
  for (std::size_t i : eligible) {
    const BaseEmbedding& z = *batch[i].prev;
    const QueryEmbedding anchor = project_query(head, z);
    for (std::size_t k = 0; k < b; ++k) logits[k] = dot(anchor, current[k]);
    for (double v : logits) require_finite(v, "context score", batch[i].id);
    out.loss.value += inv_e * cross_entropy(logits, i, g);
    if (!want_grad) continue;
    VectorXd mix_start = VectorXd::Zero(d);
    VectorXd mix_end = VectorXd::Zero(d);
    for (std::size_t k = 0; k < b; ++k) {
      const double w = inv_e * g[k];
      mix_start += w * batch[k].ctx.start;
      mix_end += w * batch[k].ctx.end;
    }
    sym_start += z.start * mix_start.transpose() + mix_start * z.start.transpose();
    sym_end += z.end * mix_end.transpose() + mix_end * z.end.transpose();
  }
  if (want_grad) {
    out.grad.query_start = head.query_start * sym_start;
    out.grad.query_end = head.query_end * sym_end;
  }
  return out;
}

LossAndGradient evaluate(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                         const ProjectionHead& head, double lambda1, double lambda2,
                         bool want_grad) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss weights must be >= 0");
  if (batch.size() < 2) throw ConfigError("batch must hold at least 2 examples");
  head.validate();
  LossAndGradient out{{}, ProjectionHead::zeros(head.dim())};
  if (lambda1 > 0.0) {
    auto term = neg_term(batch, queue, head, want_grad);
    out.report.l_neg = term.loss;
    if (want_grad) out.gradient += lambda1 * std::move(term.grad);
  }
  if (lambda2 > 0.0) {
    auto term = turn_term(batch, head, want_grad);
    out.report.l_turn = term.loss.value;
    out.report.turn_eligible = term.loss.eligible;
    if (want_grad) out.gradient += lambda2 * std::move(term.grad);
  }
  out.report.l_total = lambda1 * out.report.l_neg + lambda2 * out.report.l_turn;
  if (want_grad) {
    out.report.grad_norm = std::sqrt(out.gradient.squared_norm());
    if (!std::isfinite(out.report.grad_norm)) throw NumericError("non-finite gradient");
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::mt19937_64& rng, std::size_t min_size) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  seeded_shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(i),
                               order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    if (b.size() >= min_size) out.push_back(std::move(b));
  }
  return out;
}

std::vector<EncodedExample> gather(std::span<const EncodedExample> dataset,
                                   const std::vector<std::size_t>& ids) {
  std::vector<EncodedExample> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(dataset[i]);
  return out;
}

void check_step(const LossReport& r, std::size_t step, std::vector<StepRecord>& trajectory) {
  if (!std::isfinite(r.l_total) || r.l_total > kDivergenceThreshold || !std::isfinite(r.grad_norm)) {
    throw TrainingDiverged("training diverged at step " + std::to_string(step), trajectory);
  }
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

ExampleSet make_training_examples(std::span<const Conversation> conversations, const Corpus& corpus,
                                  std::size_t token_budget) {
  ExampleSet out;
  for (const auto& conv : conversations) {
    for (const auto& turn : conv.turns) {
      const std::string id = conv.conversation_id + "#" + std::to_string(turn.turn_index);
      const Passage* passage = turn.gold_passage_id ? corpus.find(*turn.gold_passage_id) : nullptr;
      std::optional<PhraseSpan> span =
          passage ? find_answer_span(*passage, turn.gold_answer) : std::nullopt;
      if (!span) {
        out.skipped.push_back(id);
        continue;
      }
      TrainingExample ex;
      ex.ctx = build_conv_context(conv, turn.turn_index, token_budget);
      ex.positive = std::move(*span);
      if (turn.turn_index > 1) {
        ex.prev_ctx = build_conv_context(conv, turn.turn_index - 1, token_budget);
      }
      ex.gold_answer = turn.gold_answer;
      out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<EncodedExample> encode_examples(std::span<const TrainingExample> examples,
                                            const Corpus& corpus, EncoderProvider& provider) {
  std::vector<std::string> texts;
  for (const auto& ex : examples) {
    texts.push_back(ex.ctx.serialized_text);
    texts.push_back(compose_phrase_text(ex.positive, corpus.at(ex.positive.passage_id)));
    if (ex.prev_ctx) texts.push_back(ex.prev_ctx->serialized_text);
  }
  auto base = provider.embed(texts);
  if (base.size() != texts.size()) throw ProtocolError("provider returned wrong embedding count");
  std::vector<EncodedExample> out;
  std::size_t cursor = 0;
  for (const auto& ex : examples) {
    EncodedExample e;
    e.id = ex.ctx.id();
    e.conversation_id = ex.ctx.conversation_id;
    e.ctx = std::move(base[cursor++]);
    e.phrase = std::move(base[cursor++]);
    if (ex.prev_ctx) e.prev = std::move(base[cursor++]);
    e.positive = ex.positive;
    e.gold_answer = ex.gold_answer;
    out.push_back(std::move(e));
  }
  return out;
}

void PreBatchQueue::push(std::vector<PhraseEmbedding> batch) {
  if (capacity_ == 0) return;
  batches_.push_back(std::move(batch));
  while (batches_.size() > capacity_) batches_.pop_front();
}

std::size_t PreBatchQueue::size() const {
  std::size_t n = 0;
  for (const auto& b : batches_) n += b.size();
  return n;
}

std::vector<const PhraseEmbedding*> PreBatchQueue::entries() const {
  std::vector<const PhraseEmbedding*> out;
  for (const auto& b : batches_) {
    for (const auto& e : b) out.push_back(&e);
  }
  return out;
}

double loss_neg(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                const ProjectionHead& head) {
  return neg_term(batch, queue, head, false).loss;
}

TurnLoss loss_turn(std::span<const EncodedExample> batch, const ProjectionHead& head) {
  return turn_term(batch, head, false).loss;
}

LossAndGradient loss_and_gradient(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                                  const ProjectionHead& head, double lambda1, double lambda2) {
  return evaluate(batch, queue, head, lambda1, lambda2, true);
}

LossReport loss_total(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                      const ProjectionHead& head, double lambda1, double lambda2) {
  return evaluate(batch, queue, head, lambda1, lambda2, false).report;
}

ProjectionHead grad_head(std::span<const EncodedExample> batch, const PreBatchQueue& queue,
                         const ProjectionHead& head, double lambda1, double lambda2) {
  return evaluate(batch, queue, head, lambda1, lambda2, true).gradient;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (learning_rate < 0.0 || finetune_learning_rate < 0.0) {
    throw ConfigError("learning rates must be >= 0");
  }
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("lambda1 and lambda2 must be >= 0");
  if (dim < 2) throw ConfigError("dim must be >= 2");
  if (max_phrase_len < 1) throw ConfigError("max_phrase_len must be >= 1");
  if (finetune_topk < 1) throw ConfigError("finetune_topk must be >= 1");
}

TrainConfig parse_train_config(std::istream& in, TrainConfig cfg) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      std::size_t used = 0;
      auto as_size = [&] {
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
        auto v = std::stoull(value, &used);
        return static_cast<std::size_t>(v);
      };
      auto as_double = [&] { return std::stod(value, &used); };
      if (key == "batch_size") cfg.batch_size = as_size();
      else if (key == "prebatch_batches") cfg.prebatch_batches = as_size();
      else if (key == "epochs") cfg.epochs = as_size();
      else if (key == "learning_rate") cfg.learning_rate = as_double();
      else if (key == "lambda1") cfg.lambda1 = as_double();
      else if (key == "lambda2") cfg.lambda2 = as_double();
      else if (key == "seed") cfg.seed = as_size();
      else if (key == "dim") cfg.dim = as_size();
      else if (key == "max_phrase_len") cfg.max_phrase_len = as_size();
      else if (key == "token_budget") cfg.token_budget = as_size();
      else if (key == "finetune_epochs") cfg.finetune_epochs = as_size();
      else if (key == "finetune_topk") cfg.finetune_topk = as_size();
      else if (key == "finetune_learning_rate") cfg.finetune_learning_rate = as_double();
      else throw ParseError("unknown config key '" + key + "'", line_no);
      if (used != value.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::logic_error&) {
      throw ParseError("invalid value for '" + key + "': " + value, line_no);
    }
  }
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("config not found: " + path.string());
  return parse_train_config(in, base);
}

void write_trajectory(std::ostream& out, std::span<const StepRecord> trajectory) {
  for (const auto& s : trajectory) {
    nlohmann::json rec = {{"step", s.step},
                          {"l_neg", s.loss.l_neg},
                          {"l_turn", s.loss.l_turn},
                          {"l_total", s.loss.l_total},
                          {"grad_norm", s.loss.grad_norm}};
    out << rec.dump() << '\n';
  }
}

TrainResult train(std::span<const EncodedExample> dataset, const TrainConfig& config,
                  ProjectionHead initial) {
  config.validate();
  if (dataset.size() < 2) throw ConfigError("training needs at least 2 examples");
  initial.validate();
  TrainResult result{std::move(initial), {}};
  std::mt19937_64 rng(config.seed);
  PreBatchQueue queue(config.prebatch_batches);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& ids : epoch_batches(dataset.size(), config.batch_size, rng, 2)) {
      const auto batch = gather(dataset, ids);
      auto lg = loss_and_gradient(batch, queue, result.head, config.lambda1, config.lambda2);
      result.trajectory.push_back(StepRecord{step, lg.report});
      check_step(lg.report, step, result.trajectory);
      std::vector<PhraseEmbedding> snapshot;
      snapshot.reserve(batch.size());
      for (const auto& ex : batch) snapshot.push_back(project_phrase(result.head, ex.phrase));
      queue.push(std::move(snapshot));
      if (config.learning_rate != 0.0) {
        lg.gradient *= -config.learning_rate;
        result.head += lg.gradient;
      }
      ++step;
    }
  }
  return result;
}

TrainResult finetune_query(const PhraseIndex& index, std::span<const EncodedExample> dataset,
                           const TrainConfig& config, ProjectionHead head) {
  config.validate();
  head.validate();
  if (head.dim() != index.dim()) throw ConfigError("head dim does not match index dim");
  TrainResult result{std::move(head), {}};
  if (dataset.empty()) return result;

  // Positive entries are fixed for the whole run.
  std::vector<std::optional<std::size_t>> positive(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& p = dataset[i].positive;
    positive[i] = index.find(p.passage_id, p.start_token, p.end_token);
  }

  std::mt19937_64 rng(config.seed);
  const auto d = static_cast<Eigen::Index>(index.dim());
  std::size_t step = 0;
  std::vector<double> logits;
  std::vector<double> g;
  for (std::size_t epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    for (const auto& ids : epoch_batches(dataset.size(), config.batch_size, rng, 1)) {
      std::vector<std::size_t> usable;
      for (auto i : ids) {
        if (positive[i]) usable.push_back(i);
      }
      if (usable.empty()) continue;
      const double inv_b = 1.0 / static_cast<double>(usable.size());
      LossReport report;
      MatrixXd grad_start = MatrixXd::Zero(d, d);
      MatrixXd grad_end = MatrixXd::Zero(d, d);
      for (auto i : usable) {
        const auto& ex = dataset[i];
        const QueryEmbedding q = project_query(result.head, ex.ctx);
        const std::string gold = normalize_answer(ex.gold_answer);
        std::vector<std::size_t> candidates{*positive[i]};
        for (const auto& hit : search_topk(index, q, config.finetune_topk)) {
          if (hit.entry == *positive[i] || normalize_answer(hit.span.surface) == gold) continue;
          candidates.push_back(hit.entry);
        }
        logits.assign(candidates.size(), 0.0);
        std::vector<PhraseEmbedding> phrases;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
          phrases.push_back(index.embedding(candidates[c]));
          logits[c] = dot(q, phrases.back());
          require_finite(logits[c], "score", ex.id);
        }
        report.l_neg += inv_b * cross_entropy(logits, 0, g);
        VectorXd pull_start = VectorXd::Zero(d);
        VectorXd pull_end = VectorXd::Zero(d);
        for (std::size_t c = 0; c < candidates.size(); ++c) {
          pull_start += inv_b * g[c] * phrases[c].start;
          pull_end += inv_b * g[c] * phrases[c].end;
        }
        grad_start += pull_start * ex.ctx.start.transpose();
        grad_end += pull_end * ex.ctx.end.transpose();
      }
      report.l_total = report.l_neg;
      report.grad_norm = std::sqrt(grad_start.squaredNorm() + grad_end.squaredNorm());
      result.trajectory.push_back(StepRecord{step, report});
      check_step(report, step, result.trajectory);
      if (config.finetune_learning_rate != 0.0) {
        result.head.query_start -= config.finetune_learning_rate * grad_start;
        result.head.query_end -= config.finetune_learning_rate * grad_end;
      }
      ++step;
    }
  }
  return result;
}

double turn_dependency_accuracy(std::span<const EncodedExample> dataset, const ProjectionHead& head,
                                std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  std::mt19937_64 rng(seed);
  std::size_t eligible = 0;
  std::size_t correct = 0;
  for (const auto& ids : epoch_batches(dataset.size(), batch_size, rng, 2)) {
    for (auto i : ids) {
      const auto& ex = dataset[i];
      if (!ex.prev) continue;
      ++eligible;
      const QueryEmbedding anchor = project_query(head, *ex.prev);
      const double target = dot(anchor, project_query(head, ex.ctx));
      bool wins = true;
      for (auto k : ids) {
        if (k == i || dataset[k].conversation_id == ex.conversation_id) continue;
        if (dot(anchor, project_query(head, dataset[k].ctx)) >= target) {
          wins = false;
          break;
        }
      }
      if (wins) ++correct;
    }
  }
  return eligible == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(eligible);
}

}  // namespace phraseforge

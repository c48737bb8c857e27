// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "phraseforge/errors.hpp"
#include "phraseforge/eval.hpp"
#include "phraseforge/synthetic.hpp"
#include "phraseforge/training.hpp"
#include "test_util.hpp"

using namespace phraseforge;

namespace {

double oracle_dot(const Eigen::VectorXd& a1, const Eigen::VectorXd& a2, const Eigen::VectorXd& b1,
                  const Eigen::VectorXd& b2) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a1.size(); ++i) s += a1[i] * b1[i];
  for (Eigen::Index i = 0; i < a2.size(); ++i) s += a2[i] * b2[i];
  return s;
}

// -log softmax(logits)[target] summed naively (inputs stay small in tests).
double oracle_xent(const std::vector<double>& logits, std::size_t target) {
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z);
  return -logits[target] + std::log(denom);
}

double oracle_loss_neg(const std::vector<EncodedExample>& batch,
                       const std::vector<PhraseEmbedding>& queue, const ProjectionHead& h) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Eigen::VectorXd us = h.query_start * batch[i].ctx.start;
    const Eigen::VectorXd ue = h.query_end * batch[i].ctx.end;
    std::vector<double> logits;
    for (const auto& other : batch) {
      logits.push_back(oracle_dot(us, ue, h.phrase_start * other.phrase.start,
                                  h.phrase_end * other.phrase.end));
    }
    for (const auto& q : queue) logits.push_back(oracle_dot(us, ue, q.start, q.end));
    total += oracle_xent(logits, i);
  }
  return total / double(batch.size());
}

double oracle_loss_turn(const std::vector<EncodedExample>& batch, const ProjectionHead& h) {
  double total = 0.0;
  std::size_t eligible = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].prev) continue;
    ++eligible;
    const Eigen::VectorXd zs = h.query_start * batch[i].prev->start;
    const Eigen::VectorXd ze = h.query_end * batch[i].prev->end;
    std::vector<double> logits;
    for (const auto& other : batch) {
      logits.push_back(oracle_dot(zs, ze, h.query_start * other.ctx.start, h.query_end * other.ctx.end));
    }
    total += oracle_xent(logits, i);
  }
  return eligible == 0 ? 0.0 : total / double(eligible);
}

PreBatchQueue queue_of(const std::vector<PhraseEmbedding>& items) {
  PreBatchQueue q(1);
  q.push(items);
  return q;
}

const synthetic::Benchmark& fixture_benchmark() {
  static const synthetic::Benchmark b = synthetic::generate();
  return b;
}

}  // namespace

TEST(LossNeg, MatchesSummationOracle) {
  std::mt19937_64 rng(1);
  for (std::size_t b : {2U, 3U, 8U}) {
    const auto batch = pftest::random_batch(rng, b, 6);
    const auto head = pftest::random_head(rng, 6, 0.8);
    std::vector<PhraseEmbedding> queued = {project_phrase(head, pftest::random_base(rng, 6)),
                                           project_phrase(head, pftest::random_base(rng, 6))};
    EXPECT_NEAR(loss_neg(batch, PreBatchQueue(0), head), oracle_loss_neg(batch, {}, head), 1e-10);
    EXPECT_NEAR(loss_neg(batch, queue_of(queued), head), oracle_loss_neg(batch, queued, head), 1e-10);
  }
}

TEST(LossNeg, UniformScoresGiveLogOfCandidateCount) {
  std::mt19937_64 rng(2);
  const auto zero = ProjectionHead::zeros(5);
  EXPECT_NEAR(loss_neg(pftest::random_batch(rng, 2, 5), PreBatchQueue(0), zero), std::log(2.0), 1e-12);
  EXPECT_NEAR(loss_neg(pftest::random_batch(rng, 8, 5), PreBatchQueue(0), zero), std::log(8.0), 1e-12);
  const std::vector<PhraseEmbedding> q(4, PhraseEmbedding{Eigen::VectorXd::Ones(5), Eigen::VectorXd::Ones(5)});
  EXPECT_NEAR(loss_neg(pftest::random_batch(rng, 8, 5), queue_of(q), zero), std::log(12.0), 1e-12);
}

TEST(LossNeg, SaturatesTowardZeroWhenPositivesDominate) {
  // Orthogonal one-hot features with a scaled identity head.
  std::vector<EncodedExample> batch;
  for (std::size_t i = 0; i < 4; ++i) {
    EncodedExample ex;
    ex.id = std::to_string(i);
    ex.conversation_id = ex.id;
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(4, long(i));
    ex.ctx = {e, e};
    ex.phrase = {e, e};
    batch.push_back(ex);
  }
  const auto head = 10.0 * ProjectionHead::identity(4);
  const double l = loss_neg(batch, PreBatchQueue(0), head);
  // Each row: positive scores 200, negatives 0.
  EXPECT_NEAR(l, std::log(1.0 + 3.0 * std::exp(-200.0)), 1e-12);
  EXPECT_LT(l, 1e-80);
  EXPECT_TRUE(std::isfinite(loss_neg(batch, PreBatchQueue(0), 1000.0 * ProjectionHead::identity(4))));
}

TEST(LossNeg, RejectsSingletonBatch) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(loss_neg(pftest::random_batch(rng, 1, 4), PreBatchQueue(0), ProjectionHead::identity(4)),
               ConfigError);
}

TEST(LossTurn, MatchesSummationOracleAndCountsEligible) {
  std::mt19937_64 rng(4);
  const auto batch = pftest::random_batch(rng, 6, 5);
  const auto head = pftest::random_head(rng, 5, 0.8);
  const auto t = loss_turn(batch, head);
  EXPECT_EQ(t.eligible, 5U);
  EXPECT_NEAR(t.value, oracle_loss_turn(batch, head), 1e-10);
}

TEST(LossTurn, NoEligibleExamplesGivesZero) {
  std::mt19937_64 rng(5);
  auto batch = pftest::random_batch(rng, 4, 5);
  for (auto& ex : batch) ex.prev.reset();
  const auto t = loss_turn(batch, ProjectionHead::identity(5));
  EXPECT_EQ(t.value, 0.0);
  EXPECT_EQ(t.eligible, 0U);
}

TEST(LossTurn, UniformScoresGiveLogB) {
  std::mt19937_64 rng(6);
  EXPECT_NEAR(loss_turn(pftest::random_batch(rng, 5, 4), ProjectionHead::zeros(4)).value, std::log(5.0),
              1e-12);
}

TEST(LossTotal, WeightsCombineTerms) {
  std::mt19937_64 rng(7);
  const auto batch = pftest::random_batch(rng, 4, 5);
  const auto head = pftest::random_head(rng, 5, 0.5);
  const auto r = loss_total(batch, PreBatchQueue(0), head, 2.0, 3.0);
  EXPECT_NEAR(r.l_total, 2.0 * oracle_loss_neg(batch, {}, head) + 3.0 * oracle_loss_turn(batch, head),
              1e-10);
  const auto no_turn = loss_total(batch, PreBatchQueue(0), head, 1.0, 0.0);
  EXPECT_EQ(no_turn.l_turn, 0.0);
  EXPECT_THROW(loss_total(batch, PreBatchQueue(0), head, -1.0, 0.0), ConfigError);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  std::mt19937_64 rng(8);
  const std::size_t d = 4;
  const auto batch = pftest::random_batch(rng, 5, d);
  const auto head = pftest::random_head(rng, d, 0.7);
  const std::vector<PhraseEmbedding> queued = {project_phrase(head, pftest::random_base(rng, d))};
  const auto queue = queue_of(queued);
  const double l1 = 1.5;
  const double l2 = 0.7;
  const auto g = grad_head(batch, queue, head, l1, l2);
  auto f = [&](const ProjectionHead& h) {
    return l1 * oracle_loss_neg(batch, queued, h) + l2 * oracle_loss_turn(batch, h);
  };
  const double eps = 1e-6;
  auto check = [&](Eigen::MatrixXd ProjectionHead::*member) {
    for (Eigen::Index r = 0; r < long(d); ++r) {
      for (Eigen::Index c = 0; c < long(d); ++c) {
        ProjectionHead plus = head;
        ProjectionHead minus = head;
        (plus.*member)(r, c) += eps;
        (minus.*member)(r, c) -= eps;
        const double numeric = (f(plus) - f(minus)) / (2 * eps);
        EXPECT_NEAR((g.*member)(r, c), numeric, 1e-6);
      }
    }
  };
  check(&ProjectionHead::query_start);
  check(&ProjectionHead::query_end);
  check(&ProjectionHead::phrase_start);
  check(&ProjectionHead::phrase_end);
}

TEST(Gradient, ZeroWeightTermContributesNothing) {
  std::mt19937_64 rng(9);
  const auto batch = pftest::random_batch(rng, 4, 4);
  const auto head = pftest::random_head(rng, 4);
  const auto g = grad_head(batch, PreBatchQueue(0), head, 0.0, 1.0);
  EXPECT_EQ(g.phrase_start.norm(), 0.0);
  EXPECT_EQ(g.phrase_end.norm(), 0.0);
  const auto none = grad_head(batch, PreBatchQueue(0), head, 0.0, 0.0);
  EXPECT_EQ(none.squared_norm(), 0.0);
}

TEST(Queue, KeepsTheNewestBatches) {
  PreBatchQueue q(2);
  auto item = [](double v) { return PhraseEmbedding{Eigen::VectorXd::Constant(2, v), Eigen::VectorXd::Zero(2)}; };
  q.push({item(1)});
  q.push({item(2), item(3)});
  q.push({item(4)});
  EXPECT_EQ(q.size(), 3U);
  const auto e = q.entries();
  EXPECT_EQ(e[0]->start[0], 2.0);
  EXPECT_EQ(e[2]->start[0], 4.0);
  PreBatchQueue none(0);
  none.push({item(1)});
  EXPECT_EQ(none.size(), 0U);
}

TEST(Config, ParsesKeysCommentsAndRejectsJunk) {
  std::istringstream in("# comment\nbatch_size = 4\nlearning_rate=0.5 # trailing\n\nlambda2 = 0\n");
  const auto cfg = parse_train_config(in);
  EXPECT_EQ(cfg.batch_size, 4U);
  EXPECT_EQ(cfg.learning_rate, 0.5);
  EXPECT_EQ(cfg.lambda2, 0.0);
  EXPECT_EQ(cfg.epochs, TrainConfig{}.epochs);
  std::istringstream unknown("bogus = 1\n");
  EXPECT_THROW(parse_train_config(unknown), ParseError);
  std::istringstream bad("epochs = ten\n");
  EXPECT_THROW(parse_train_config(bad), ParseError);
  std::istringstream neg("epochs = -1\n");
  EXPECT_THROW(parse_train_config(neg), ParseError);
  TrainConfig c;
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(load_train_config("/nonexistent.cfg"), NotFoundError);
}

TEST(Trajectory, WritesOneJsonLinePerStep) {
  std::ostringstream out;
  const std::vector<StepRecord> t = {{0, {1.0, 0.5, 4.5, 2.0, 3}}, {1, {0.5, 0.25, 2.25, 1.0, 3}}};
  write_trajectory(out, t);
  EXPECT_EQ(out.str(),
            "{\"grad_norm\":2.0,\"l_neg\":1.0,\"l_total\":4.5,\"l_turn\":0.5,\"step\":0}\n"
            "{\"grad_norm\":1.0,\"l_neg\":0.5,\"l_total\":2.25,\"l_turn\":0.25,\"step\":1}\n");
}

namespace {

std::vector<EncodedExample> fixture_examples(std::size_t dim = 32) {
  const auto& bench = fixture_benchmark();
  const Corpus corpus(bench.passages);
  const auto convs = group_conversations(bench.conversations);
  const auto set = make_training_examples(convs, corpus);
  FeaturizerProvider provider(dim, 7);
  return encode_examples(set.examples, corpus, provider);
}

}  // namespace

TEST(Examples, OnePerTurnWithGoldHistory) {
  const auto& bench = fixture_benchmark();
  const Corpus corpus(bench.passages);
  const auto convs = group_conversations(bench.conversations);
  const auto set = make_training_examples(convs, corpus);
  EXPECT_EQ(set.examples.size(), bench.conversations.size());
  EXPECT_TRUE(set.skipped.empty());
  for (const auto& ex : set.examples) {
    EXPECT_EQ(ex.prev_ctx.has_value(), ex.ctx.turn_index > 1);
    EXPECT_EQ(normalize_answer(ex.positive.surface), normalize_answer(ex.gold_answer));
  }
  std::vector<ConversationTurn> orphan = {{"o", 1, "q", "not present", std::string("syn-t00-p00")}};
  const auto skipped = make_training_examples(group_conversations(orphan), corpus);
  EXPECT_TRUE(skipped.examples.empty());
  EXPECT_EQ(skipped.skipped.size(), 1U);
}

TEST(Train, ZeroLearningRateLeavesHeadUnchanged) {
  const auto data = fixture_examples(16);
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 2;
  cfg.learning_rate = 0.0;
  const auto r = train(data, cfg, ProjectionHead::identity(16));
  EXPECT_TRUE(r.head == ProjectionHead::identity(16));
  EXPECT_EQ(r.trajectory.size(), 2U * ((data.size() + 7) / 8));
}

TEST(Train, IsDeterministicForASeed) {
  const auto data = fixture_examples(16);
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 3;
  const auto a = train(data, cfg, ProjectionHead::identity(16));
  const auto b = train(data, cfg, ProjectionHead::identity(16));
  EXPECT_TRUE(a.head == b.head);
  std::ostringstream ta, tb;
  write_trajectory(ta, a.trajectory);
  write_trajectory(tb, b.trajectory);
  EXPECT_EQ(ta.str(), tb.str());
  cfg.seed = 8;
  EXPECT_FALSE(train(data, cfg, ProjectionHead::identity(16)).head == a.head);
}

TEST(Train, ContrastiveLossDropsByHalfOnFixture) {
  const auto data = fixture_examples(kDefaultDim);
  const auto r = train(data, TrainConfig{}, ProjectionHead::identity(kDefaultDim));
  ASSERT_GE(r.trajectory.size(), 20U);
  auto mean = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += r.trajectory[i].loss.l_neg;
    return s / double(to - from);
  };
  const std::size_t n = r.trajectory.size();
  EXPECT_LE(mean(n - 10, n), 0.5 * mean(0, 10));
}

TEST(Train, DivergenceIsReportedWithTrajectory) {
  const auto data = fixture_examples(16);
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.learning_rate = 1e6;
  cfg.epochs = 50;
  try {
    train(data, cfg, ProjectionHead::identity(16));
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_FALSE(e.trajectory().empty());
  } catch (const NumericError&) {
    SUCCEED();
  }
}

TEST(Finetune, UpdatesOnlyQueryMatricesAndLeavesIndexAlone) {
  const auto& bench = fixture_benchmark();
  const Corpus corpus(bench.passages);
  const auto data = fixture_examples(16);
  FeaturizerProvider provider(16, 7);
  const auto head = ProjectionHead::identity(16);
  const auto index = build_index(corpus, head, provider);
  const auto before = index;
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.finetune_epochs = 2;
  const auto r = finetune_query(index, data, cfg, head);
  EXPECT_TRUE(index == before);
  EXPECT_EQ(r.head.phrase_start, head.phrase_start);
  EXPECT_EQ(r.head.phrase_end, head.phrase_end);
  EXPECT_NE(r.head.query_start, head.query_start);
  EXPECT_FALSE(r.trajectory.empty());
  for (const auto& s : r.trajectory) EXPECT_EQ(s.loss.l_turn, 0.0);

  TrainConfig frozen = cfg;
  frozen.finetune_learning_rate = 0.0;
  EXPECT_TRUE(finetune_query(index, data, frozen, head).head == head);
}

TEST(TurnAccuracy, PerfectWhenContextsAreOrthogonalPerConversation) {
  // Each conversation lives on its own axis, so the previous context always
  // prefers its own successor.
  std::vector<EncodedExample> data;
  for (std::size_t c = 0; c < 4; ++c) {
    for (int t = 1; t <= 2; ++t) {
      EncodedExample ex;
      ex.conversation_id = "c" + std::to_string(c);
      ex.id = ex.conversation_id + "#" + std::to_string(t);
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(4, long(c));
      ex.ctx = {e, e};
      ex.phrase = {e, e};
      if (t == 2) ex.prev = BaseEmbedding{e, e};
      data.push_back(ex);
    }
  }
  EXPECT_DOUBLE_EQ(turn_dependency_accuracy(data, ProjectionHead::identity(4), 8, 7), 1.0);
  EXPECT_DOUBLE_EQ(turn_dependency_accuracy(data, ProjectionHead::zeros(4), 8, 7), 0.0);
  EXPECT_THROW(turn_dependency_accuracy(data, ProjectionHead::identity(4), 1, 7), ConfigError);
}

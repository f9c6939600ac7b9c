#include <gtest/gtest.h>

#include <vector>

#include "pmd/errors.hpp"
#include "pmd/tuning.hpp"

using namespace pmd;

namespace {

ScoredDecision sd(double m, Label l) { return {m, l}; }

double brute_accuracy(const std::vector<ScoredDecision>& r, double tau) {
  int ok = 0;
  for (const auto& d : r) ok += ((d.mistake_likelihood >= tau) == (d.label == Label::kMistake)) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(r.size());
}

// Full-length trace with given per-iteration success likelihoods and
// per-turn metrics.
ExampleResult trace(std::string id, Label label, std::vector<double> likelihoods,
                    std::vector<double> rel, std::vector<double> inf) {
  ExampleResult r;
  r.id = std::move(id);
  r.label = label;
  r.state.success_likelihoods = likelihoods;
  for (std::size_t i = 0; i < likelihoods.size(); ++i) {
    r.state.turns.push_back({"Is q" + std::to_string(i) + "?", classify_answer(0.9),
                             static_cast<int>(i) + 1});
    TurnMetrics m;
    m.relevance = rel[i];
    m.informativeness = std::abs(inf[i]);
    m.ref_adjusted_informativeness = inf[i];
    m.nli_success_prob = 0.5;
    r.turn_metrics.push_back(m);
  }
  r.state.stop_reason = StopReason::kMaxIterations;
  r.state.mistake_likelihood_final = 1.0 - likelihoods.back();
  r.state.decision = decide(r.state.mistake_likelihood_final, 0.5);
  r.metrics = aggregate_example(r.turn_metrics, r.state.success_likelihoods, label);
  return r;
}

}  // namespace

TEST(TauGrid, HundredValues) {
  const auto& g = tau_grid();
  EXPECT_EQ(g.front(), 0.01);
  EXPECT_EQ(g[39], 0.40);
  EXPECT_EQ(g[98], 0.99);
  EXPECT_EQ(g.back(), 1.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
}

TEST(TuneTau, UniqueMaximumAtPointFour) {
  const std::vector<ScoredDecision> r = {sd(0.395, Label::kSuccess), sd(0.40, Label::kMistake),
                                         sd(0.41, Label::kMistake), sd(0.2, Label::kSuccess),
                                         sd(0.9, Label::kMistake)};
  const auto choice = tune_tau(r);
  EXPECT_EQ(choice.tau, 0.40);
  EXPECT_EQ(choice.accuracy, 1.0);
  int maximisers = 0;
  for (double t : tau_grid()) maximisers += brute_accuracy(r, t) == 1.0 ? 1 : 0;
  EXPECT_EQ(maximisers, 1);
}

TEST(TuneTau, AllMistakesCertainReturnsSmallest) {
  const std::vector<ScoredDecision> r = {sd(1.0, Label::kMistake), sd(1.0, Label::kMistake)};
  const auto choice = tune_tau(r);
  EXPECT_EQ(choice.tau, 0.01);
  EXPECT_EQ(choice.accuracy, 1.0);
}

TEST(TuneTau, SingleExample) {
  const std::vector<ScoredDecision> r = {sd(0.3, Label::kSuccess)};
  const auto choice = tune_tau(r);
  EXPECT_EQ(choice.accuracy, 1.0);
  EXPECT_EQ(decide(0.3, choice.tau), Label::kSuccess);
  EXPECT_THROW(tune_tau({}), ValidationError);
}

TEST(TuneTau, AccuracyAtMatchesBruteForce) {
  const std::vector<ScoredDecision> r = {sd(0.1, Label::kMistake), sd(0.55, Label::kSuccess),
                                         sd(0.7, Label::kMistake), sd(0.33, Label::kSuccess)};
  for (double t : tau_grid()) EXPECT_EQ(accuracy_at(r, t), brute_accuracy(r, t));
}

TEST(CascadingMetric, Cases) {
  ExampleMetrics m;
  m.example_informativeness = 0.6;
  m.example_relevance = 0.5;
  EXPECT_DOUBLE_EQ(cascading_metric(m, true), 0.3);
  EXPECT_EQ(cascading_metric(m, false), 0.0);
  m.example_informativeness = -0.6;
  EXPECT_EQ(cascading_metric(m, true), 0.0);
  m.example_informativeness.reset();
  EXPECT_EQ(cascading_metric(m, true), 0.0);
}

TEST(StoppingPoint, Rules) {
  const std::vector<double> conf = {0.5, 0.99, 0.5};
  StopReason reason{};
  EXPECT_EQ(stopping_point(conf, 0.1, 0.05, 10, &reason), 2);
  EXPECT_EQ(reason, StopReason::kConfident);
  const std::vector<double> flat(10, 0.5);
  EXPECT_EQ(stopping_point(flat, 0.1, 0.05, 10, &reason), 3);
  EXPECT_EQ(reason, StopReason::kStabilized);
  const std::vector<double> zig = {0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7};
  EXPECT_EQ(stopping_point(zig, 0.1, 0.05, 10, &reason), 10);
  EXPECT_EQ(reason, StopReason::kMaxIterations);
}

TEST(TuneStopping, ConstantTracesTieToSmallestCell) {
  std::vector<ExampleResult> traces;
  for (int i = 0; i < 4; ++i) {
    const Label label = i % 2 ? Label::kMistake : Label::kSuccess;
    const double p = label == Label::kMistake ? 0.3 : 0.7;
    traces.push_back(trace("c" + std::to_string(i), label, std::vector<double>(10, p),
                           std::vector<double>(10, 0.5), std::vector<double>(10, 0.4)));
  }
  const auto r = tune_stopping(traces);
  ASSERT_EQ(r.grid_trace.size(), 16u);
  for (const auto& cell : r.grid_trace) {
    EXPECT_EQ(cell.mean_iterations, 3.0) << cell.delta << " " << cell.epsilon;
    EXPECT_DOUBLE_EQ(cell.objective, 0.2);
  }
  EXPECT_EQ(r.best_delta, 0.05);
  EXPECT_EQ(r.best_epsilon, 0.025);
  EXPECT_DOUBLE_EQ(r.objective_value, 0.2);
  EXPECT_EQ(r.grid_trace[0].delta, 0.05);
  EXPECT_EQ(r.grid_trace[1].epsilon, 0.05);
  EXPECT_EQ(r.grid_trace[4].delta, 0.1);
}

TEST(TuneStopping, DominatingCellWins) {
  // Likelihoods reach 0.85 at turn 2; only eps=0.2 stops there, and the
  // second turn's informativeness is the only positive evidence.
  std::vector<ExampleResult> traces;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> lik = {0.5, 0.85, 0.5, 0.3, 0.5, 0.3, 0.5, 0.3, 0.5, 0.3};
    std::vector<double> rel(10, 0.5);
    std::vector<double> inf(10, -0.5);
    inf[1] = 0.8;
    for (std::size_t k = 2; k < inf.size(); ++k) inf[k] = -0.1;
    rel[1] = 0.9;
    for (std::size_t k = 2; k < rel.size(); ++k) rel[k] = 0.01;
    traces.push_back(trace("d" + std::to_string(i), Label::kSuccess, lik, rel, inf));
  }
  const auto r = tune_stopping(traces);
  EXPECT_EQ(r.best_epsilon, 0.2);
  EXPECT_EQ(r.best_delta, 0.05);
  double best = 0;
  for (const auto& cell : r.grid_trace) best = std::max(best, cell.objective);
  EXPECT_EQ(r.objective_value, best);
  EXPECT_NEAR(r.objective_value, 0.7 * 0.8, 1e-12);
  const auto again = tune_stopping(traces);
  EXPECT_EQ(again.best_tau, r.best_tau);
  EXPECT_EQ(again.objective_value, r.objective_value);
}

TEST(TuneStopping, NeedsOkTraces) {
  EXPECT_THROW(tune_stopping({}), ValidationError);
  ExampleResult skipped;
  skipped.status = ExampleStatus::kSkipped;
  const std::vector<ExampleResult> only = {skipped};
  EXPECT_THROW(tune_stopping(only), ValidationError);
}

TEST(DetCurve, SeparableHasPerfectPoint) {
  const std::vector<ScoredDecision> r = {sd(0.9, Label::kMistake), sd(0.8, Label::kMistake),
                                         sd(0.1, Label::kSuccess), sd(0.2, Label::kSuccess)};
  const auto det = det_curve(r);
  ASSERT_EQ(det.size(), 100u);
  bool perfect = false;
  for (const auto& p : det) perfect |= (*p.miss_rate == 0.0 && *p.false_alarm_rate == 0.0);
  EXPECT_TRUE(perfect);
}

TEST(DetCurve, AllHalfStepsAtHalf) {
  const std::vector<ScoredDecision> r = {sd(0.5, Label::kMistake), sd(0.5, Label::kSuccess)};
  for (const auto& p : det_curve(r)) {
    if (p.tau <= 0.5) {
      EXPECT_EQ(*p.miss_rate, 0.0);
      EXPECT_EQ(*p.false_alarm_rate, 1.0);
    } else {
      EXPECT_EQ(*p.miss_rate, 1.0);
      EXPECT_EQ(*p.false_alarm_rate, 0.0);
    }
  }
}

TEST(DetCurve, SingleClassGivesNullRates) {
  const std::vector<ScoredDecision> r = {sd(0.3, Label::kSuccess)};
  for (const auto& p : det_curve(r)) {
    EXPECT_FALSE(p.miss_rate.has_value());
    ASSERT_TRUE(p.false_alarm_rate.has_value());
  }
}

TEST(ScoredDecisions, OnlyOkResults) {
  ExampleResult ok;
  ok.status = ExampleStatus::kOk;
  ok.label = Label::kMistake;
  ok.state.mistake_likelihood_final = 0.7;
  ExampleResult skipped;
  skipped.status = ExampleStatus::kSkipped;
  const std::vector<ExampleResult> rs = {ok, skipped};
  const auto d = scored_decisions(rs);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].mistake_likelihood, 0.7);
  EXPECT_EQ(d[0].label, Label::kMistake);
}

#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "pmd/domain.hpp"
#include "pmd/metrics.hpp"
#include "pmd/orchestrator.hpp"

namespace pmd {

/// Final mistake likelihood of one example with its ground truth.
struct ScoredDecision {
  double mistake_likelihood = 0.0;
  Label label = Label::kSuccess;
};

/// {0.01, 0.02, ..., 0.99, 1.0}: 100 thresholds, built as k/100.
const std::array<double, 100>& tau_grid();

inline constexpr std::array<double, 4> kDeltaGrid = {0.05, 0.1, 0.2, 0.4};
inline constexpr std::array<double, 4> kEpsilonGrid = {0.025, 0.05, 0.1, 0.2};

double accuracy_at(std::span<const ScoredDecision> results, double tau);

struct TauChoice {
  double tau = 1.0;
  double accuracy = 0.0;
};

/// Smallest grid threshold with maximal accuracy. Throws on empty input.
TauChoice tune_tau(std::span<const ScoredDecision> results);

/// Relevance x reference-adjusted informativeness when the decision was
/// correct and the product is positive; otherwise 0. Missing aggregates
/// count as 0.
double cascading_metric(const ExampleMetrics& metrics, bool correct);

struct GridCell {
  double delta = 0.0;
  double epsilon = 0.0;
  double tau = 0.0;
  double accuracy = 0.0;
  double objective = 0.0;  // mean cascading metric
  double mean_iterations = 0.0;
};

struct TuneResult {
  double best_tau = 0.0;
  double best_delta = 0.0;
  double best_epsilon = 0.0;
  double objective_value = 0.0;
  std::vector<GridCell> grid_trace;  // delta-major order
};

/// Number of turns the stopping rule keeps from a full-length trace.
int stopping_point(std::span<const double> likelihoods, double delta, double epsilon,
                   int max_iterations, StopReason* reason = nullptr);

/// Replays full-length dialogs under every (delta, epsilon) cell: truncate
/// at the cell's stopping point, re-tune tau on the truncated decisions,
/// score the mean cascading metric. Ties go to smaller delta, then smaller
/// epsilon. Only status-ok traces take part. Throws if none do.
TuneResult tune_stopping(std::span<const ExampleResult> full_traces, int max_iterations = 10);

struct DetPoint {
  double tau = 0.0;
  std::optional<double> miss_rate;         // true mistakes decided success
  std::optional<double> false_alarm_rate;  // true successes decided mistake
};

/// One point per grid threshold. A rate is empty when its class is absent.
std::vector<DetPoint> det_curve(std::span<const ScoredDecision> results);

/// Decisions of the status-ok results.
std::vector<ScoredDecision> scored_decisions(std::span<const ExampleResult> results);

}  // namespace pmd

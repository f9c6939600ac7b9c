#include "pmd/tuning.hpp"

#include "pmd/errors.hpp"

namespace pmd {

const std::array<double, 100>& tau_grid() {
  static const std::array<double, 100> grid = [] {
    std::array<double, 100> g{};
    for (int k = 1; k <= 100; ++k) g[static_cast<std::size_t>(k - 1)] = k / 100.0;
    return g;
  }();
  return grid;
}

double accuracy_at(std::span<const ScoredDecision> results, double tau) {
  if (results.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : results) {
    if (decide(r.mistake_likelihood, tau) == r.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(results.size());
}

TauChoice tune_tau(std::span<const ScoredDecision> results) {
  if (results.empty()) throw ValidationError("tune_tau: no results");
  TauChoice best{tau_grid().front(), -1.0};
  for (double tau : tau_grid()) {
    const double acc = accuracy_at(results, tau);
    if (acc > best.accuracy) best = {tau, acc};
  }
  return best;
}

double cascading_metric(const ExampleMetrics& metrics, bool correct) {
  if (!correct) return 0.0;
  const double product =
      metrics.example_informativeness.value_or(0.0) * metrics.example_relevance.value_or(0.0);
  return product > 0.0 ? product : 0.0;
}

int stopping_point(std::span<const double> likelihoods, double delta, double epsilon,
                   int max_iterations, StopReason* reason) {
  for (std::size_t n = 1; n <= likelihoods.size(); ++n) {
    if (auto stop = should_stop(likelihoods.first(n), delta, epsilon, max_iterations)) {
      if (reason != nullptr) *reason = *stop;
      return static_cast<int>(n);
    }
  }
  // Trace ended before any rule fired (e.g. candidate exhaustion).
  if (reason != nullptr) *reason = StopReason::kMaxIterations;
  return static_cast<int>(likelihoods.size());
}

TuneResult tune_stopping(std::span<const ExampleResult> full_traces, int max_iterations) {
  std::vector<const ExampleResult*> ok;
  for (const auto& r : full_traces) {
    if (r.status == ExampleStatus::kOk && !r.state.success_likelihoods.empty()) ok.push_back(&r);
  }
  if (ok.empty()) throw ValidationError("tune_stopping: no usable traces");

  TuneResult result;
  bool have_best = false;
  for (double delta : kDeltaGrid) {
    for (double epsilon : kEpsilonGrid) {
      std::vector<ExampleResult> truncated;
      truncated.reserve(ok.size());
      std::vector<ScoredDecision> decisions;
      decisions.reserve(ok.size());
      double iterations = 0.0;
      for (const ExampleResult* full : ok) {
        StopReason reason{};
        const int k =
            stopping_point(full->state.success_likelihoods, delta, epsilon, max_iterations, &reason);
        // Decided with tau = 1 for now; re-decided after tau is tuned below.
        truncated.push_back(truncate_result(*full, k, reason, 1.0));
        decisions.push_back({truncated.back().state.mistake_likelihood_final, full->label});
        iterations += truncated.back().metrics.iterations;
      }
      const TauChoice tau = tune_tau(decisions);
      double total = 0.0;
      for (const auto& t : truncated) {
        const bool correct = decide(t.state.mistake_likelihood_final, tau.tau) == t.label;
        total += cascading_metric(t.metrics, correct);
      }
      GridCell cell{delta,
                    epsilon,
                    tau.tau,
                    tau.accuracy,
                    total / static_cast<double>(truncated.size()),
                    iterations / static_cast<double>(truncated.size())};
      result.grid_trace.push_back(cell);
      if (!have_best || cell.objective > result.objective_value) {
        have_best = true;
        result.best_delta = delta;
        result.best_epsilon = epsilon;
        result.best_tau = tau.tau;
        result.objective_value = cell.objective;
      }
    }
  }
  return result;
}

std::vector<DetPoint> det_curve(std::span<const ScoredDecision> results) {
  std::size_t mistakes = 0;
  std::size_t successes = 0;
  for (const auto& r : results) {
    (r.label == Label::kMistake ? mistakes : successes) += 1;
  }
  std::vector<DetPoint> out;
  out.reserve(tau_grid().size());
  for (double tau : tau_grid()) {
    std::size_t misses = 0;
    std::size_t false_alarms = 0;
    for (const auto& r : results) {
      const Label d = decide(r.mistake_likelihood, tau);
      if (r.label == Label::kMistake && d == Label::kSuccess) ++misses;
      if (r.label == Label::kSuccess && d == Label::kMistake) ++false_alarms;
    }
    DetPoint p;
    p.tau = tau;
    if (mistakes > 0) p.miss_rate = static_cast<double>(misses) / static_cast<double>(mistakes);
    if (successes > 0) {
      p.false_alarm_rate = static_cast<double>(false_alarms) / static_cast<double>(successes);
    }
    out.push_back(p);
  }
  return out;
}

std::vector<ScoredDecision> scored_decisions(std::span<const ExampleResult> results) {
  std::vector<ScoredDecision> out;
  for (const auto& r : results) {
    if (r.status != ExampleStatus::kOk) continue;
    out.push_back({r.state.mistake_likelihood_final, r.label});
  }
  return out;
}

}  // namespace pmd

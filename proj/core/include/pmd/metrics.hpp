#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pmd/domain.hpp"
#include "pmd/nli_judge.hpp"

namespace pmd {

/// Probabilities are clamped to [kProbabilityFloor, 1 - kProbabilityFloor]
/// before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// H(p) in bits with 0 log 0 = 0. Throws ValidationError outside [0, 1].
double binary_entropy(double p);

/// 1 - H(p).
double information_content(double p);

/// NLI belief: mistake iff p < 0.5.
Label nli_belief(double success_probability);

/// +information_content(p) when the belief matches `label`, else negated.
double signed_information_content(double success_probability, Label label);

/// |p_e(history + (candidate, No)) - p_e(history + (candidate, Yes))|.
double relevance(NliJudge& judge, std::string_view procedure, std::span<const QaPair> history,
                 std::string_view candidate);

/// 1 - H(p_e(history + turn)). The turn's answer must be Yes or No.
double informativeness(NliJudge& judge, std::string_view procedure,
                       std::span<const QaPair> history, const QaPair& turn);

double ref_adjusted_informativeness(NliJudge& judge, std::string_view procedure,
                                    std::span<const QaPair> history, const QaPair& turn,
                                    Label label);

struct TurnMetrics {
  double relevance = 0.0;
  // Empty for Unsure turns, which carry no evidence.
  std::optional<double> informativeness;
  std::optional<double> ref_adjusted_informativeness;
  std::optional<double> nli_success_prob;

  bool operator==(const TurnMetrics&) const = default;
};

struct ExampleMetrics {
  std::optional<double> example_relevance;
  std::optional<double> example_informativeness;
  double decision_error = 0.0;
  int iterations = 0;
  double information_gain = 0.0;

  bool operator==(const ExampleMetrics&) const = default;
};

/// Mean; empty when there are no turns.
std::optional<double> example_relevance(std::span<const double> per_turn_relevances);

/// Max over turns not answered Unsure; empty when none remain. Entries of
/// `per_turn_ref_adjusted` at Unsure positions are ignored.
std::optional<double> example_informativeness(std::span<const double> per_turn_ref_adjusted,
                                              std::span<const Answer> answers);

/// Max over the present values; empty when none are present.
std::optional<double> example_informativeness(
    std::span<const std::optional<double>> per_turn_ref_adjusted);

/// success -> 1 - p, mistake -> p.
double decision_error(double final_success_likelihood, Label label);

/// Mean of 1 - H(p_i). Throws ValidationError on an empty list.
double information_gain(std::span<const double> success_likelihoods);

/// Per-turn metrics for a finished dialog. Turn i is scored against the
/// Unsure-filtered history of turns before it.
std::vector<TurnMetrics> score_turns(NliJudge& judge, std::string_view procedure,
                                     std::span<const DialogTurn> turns, Label label);

/// Example-level aggregates from per-turn metrics and the likelihood trace.
ExampleMetrics aggregate_example(std::span<const TurnMetrics> turn_metrics,
                                 std::span<const double> success_likelihoods, Label label);

}  // namespace pmd

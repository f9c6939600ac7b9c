#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmd/orchestrator.hpp"
#include "pmd/tuning.hpp"

namespace pmd {

struct RunCounts {
  std::size_t evaluated = 0;  // status ok
  std::size_t skipped = 0;
  std::size_t errored = 0;
  std::size_t null_metric = 0;  // evaluated examples with a missing aggregate

  bool operator==(const RunCounts&) const = default;
};

/// Means over evaluated examples. A mean is empty when nothing contributes.
struct RunSummary {
  std::optional<double> accuracy;
  std::optional<double> mean_example_relevance;
  std::optional<double> mean_example_informativeness;
  std::optional<double> mean_iterations;
  std::optional<double> mean_information_gain;
  RunCounts counts;

  bool operator==(const RunSummary&) const = default;
};

/// Independent of input order: every mean sums its sorted values.
RunSummary summarize(std::span<const ExampleResult> results);

/// Copy with every real rounded to 9 significant digits, as written to
/// results.jsonl.
ExampleResult rounded(const ExampleResult& result);

/// One results.jsonl line (no trailing newline).
std::string result_to_json(const ExampleResult& result);
/// Inverse of result_to_json. Throws ValidationError on schema violations.
ExampleResult result_from_json(std::string_view line);

/// Sorted by id, one line per result.
std::string results_to_jsonl(std::vector<ExampleResult> results);
std::vector<ExampleResult> results_from_jsonl(std::string_view text);

std::string summary_to_json(const RunSummary& summary);

inline constexpr std::string_view kScatterHeader =
    "id,decision_error,example_relevance,example_informativeness,decision,label,stop_reason";

/// Header plus one row per evaluated example; missing values are empty cells.
std::string scatter_csv(std::span<const ExampleResult> results);

/// "tau,miss_rate,false_alarm_rate" plus one row per threshold.
std::string det_csv(std::span<const DetPoint> points);

std::string tau_report_json(const TauChoice& choice, std::span<const ScoredDecision> results);
std::string tuning_report_json(const TuneResult& result);

/// Shortest round-trip decimal form, as used throughout the reports.
std::string format_real(double v);

}  // namespace pmd

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmd/backend.hpp"
#include "pmd/domain.hpp"
#include "pmd/metrics.hpp"
#include "pmd/nli_judge.hpp"
#include "pmd/prompts.hpp"
#include "pmd/ranking.hpp"

namespace pmd {

struct RunConfig {
  int max_iterations = 10;  // n*
  double delta = 0.1;       // stabilisation threshold
  double epsilon = 0.05;    // confidence margin, < 0.5
  double tau = 0.5;         // mistake confidence threshold
  RankingMode ranking_mode = RankingMode::kLikelihood;
  bool icl_enabled = false;
  bool rationale_free = false;
  std::optional<double> length_penalty;
  std::uint64_t seed = 0;
  int max_candidates = 4;
  bool gpt_compat = false;
  // Only the n* cap ends a dialog; used to record traces for stopping
  // parameter tuning.
  bool disable_early_stop = false;

  /// Throws ValidationError on out-of-range fields.
  void validate() const;
};

/// Stop check after an iteration. Precedence: confident (latest p < eps or
/// p > 1 - eps), then stabilized (last two deltas both < delta, needs three
/// values), then the n* cap.
std::optional<StopReason> should_stop(std::span<const double> likelihoods, double delta,
                                      double epsilon, int max_iterations);

enum class ExampleStatus : std::uint8_t { kOk, kSkipped, kErrored };
std::string_view to_string(ExampleStatus s);
ExampleStatus parse_example_status(std::string_view s);

/// Ranked candidate pool behind one dialog turn.
struct TurnRecord {
  int iteration_index = 1;
  std::string vqg_prompt;
  std::vector<RankedCandidate> ranked;

  bool operator==(const TurnRecord&) const = default;
};

/// Everything known about one evaluated example; the row type of all reports.
struct ExampleResult {
  std::string id;
  Label label = Label::kSuccess;
  MistakeType mistake_type = MistakeType::kNone;
  ExampleStatus status = ExampleStatus::kOk;
  std::string note;  // skip/error reason or recorded anomaly
  RankingMode ranking_mode = RankingMode::kLikelihood;
  DialogState state;
  std::vector<TurnMetrics> turn_metrics;
  ExampleMetrics metrics;
  std::vector<TurnRecord> turn_records;

  bool correct() const { return status == ExampleStatus::kOk && state.decision == label; }
  bool operator==(const ExampleResult&) const = default;
};

/// mistake iff mistake_likelihood >= tau.
Label decide(double mistake_likelihood, double tau);

/// Runs self-dialogs for examples against one backend. Thread-safe: one
/// engine may serve many workers, sharing the NLI cache.
class DialogEngine {
 public:
  DialogEngine(Backend& backend, RunConfig config, IclBank bank = default_icl_bank());

  /// Dialog or rationale-free per config. Backend failures become
  /// skipped/errored results instead of exceptions.
  ExampleResult run(const Example& example);

  ExampleResult run_dialog(const Example& example);
  ExampleResult run_rationale_free(const Example& example);

  const RunConfig& config() const { return config_; }
  NliJudge& judge() { return judge_; }

 private:
  std::vector<RankedCandidate> rank(const Example& example, std::span<const QaPair> history,
                                    std::span<const std::string> asked,
                                    std::span<const CandidateQuestion> pool);

  Backend& backend_;
  RunConfig config_;
  IclBank bank_;
  NliJudge judge_;
};

/// Runs every example on a pool of `workers` threads; results sorted by id.
std::vector<ExampleResult> evaluate(std::span<const Example> examples, DialogEngine& engine,
                                    int workers = 1);

/// The result as if the dialog had stopped after `turns` iterations
/// (1 <= turns <= iterations), re-deciding with `tau`. Exact because turn
/// metrics depend only on earlier turns.
ExampleResult truncate_result(const ExampleResult& full, int turns, StopReason reason, double tau);

}  // namespace pmd

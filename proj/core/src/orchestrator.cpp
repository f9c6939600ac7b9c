#include "pmd/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "pmd/errors.hpp"
#include "pmd/util.hpp"

namespace pmd {

void RunConfig::validate() const {
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must be in (0,1)");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ValidationError("epsilon must be in (0,0.5)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("tau must be in (0,1]");
  if (max_candidates < 1) throw ValidationError("max_candidates must be >= 1");
  if (length_penalty && !std::isfinite(*length_penalty)) {
    throw ValidationError("length_penalty must be finite");
  }
}

std::optional<StopReason> should_stop(std::span<const double> likelihoods, double delta,
                                      double epsilon, int max_iterations) {
  if (likelihoods.empty()) return std::nullopt;
  const std::size_t n = likelihoods.size();
  const double p = likelihoods[n - 1];
  if (p < epsilon || p > 1.0 - epsilon) return StopReason::kConfident;
  if (n >= 3 && std::abs(likelihoods[n - 1] - likelihoods[n - 2]) < delta &&
      std::abs(likelihoods[n - 2] - likelihoods[n - 3]) < delta) {
    return StopReason::kStabilized;
  }
  if (static_cast<int>(n) >= max_iterations) return StopReason::kMaxIterations;
  return std::nullopt;
}

std::string_view to_string(ExampleStatus s) {
  switch (s) {
    case ExampleStatus::kOk:
      return "ok";
    case ExampleStatus::kSkipped:
      return "skipped";
    case ExampleStatus::kErrored:
      return "errored";
  }
  return "?";
}

ExampleStatus parse_example_status(std::string_view s) {
  if (s == "ok") return ExampleStatus::kOk;
  if (s == "skipped") return ExampleStatus::kSkipped;
  if (s == "errored") return ExampleStatus::kErrored;
  throw ValidationError("unknown status: '" + std::string(s) + "'");
}

Label decide(double mistake_likelihood, double tau) {
  return mistake_likelihood >= tau ? Label::kMistake : Label::kSuccess;
}

namespace {

ExampleResult skeleton(const Example& example, const RunConfig& config) {
  ExampleResult r;
  r.id = example.id;
  r.label = example.label;
  r.mistake_type = example.mistake_type;
  r.ranking_mode = config.ranking_mode;
  r.state.example_id = example.id;
  return r;
}

void finish_decision(ExampleResult& r, double tau) {
  const double p = r.state.success_likelihoods.back();
  r.state.mistake_likelihood_final = 1.0 - p;
  r.state.decision = decide(r.state.mistake_likelihood_final, tau);
}

double checked(double p, std::string_view what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw BackendUnavailable("backend returned " + std::string(what) + " outside [0,1]");
  }
  return p;
}

}  // namespace

DialogEngine::DialogEngine(Backend& backend, RunConfig config, IclBank bank)
    : backend_(backend), config_(config), bank_(std::move(bank)), judge_(backend) {
  config_.validate();
}

ExampleResult DialogEngine::run(const Example& example) {
  try {
    return config_.rationale_free ? run_rationale_free(example) : run_dialog(example);
  } catch (const ContentFiltered& e) {
    ExampleResult r = skeleton(example, config_);
    r.status = ExampleStatus::kSkipped;
    r.note = std::string("content_filtered: ") + e.what();
    return r;
  } catch (const std::exception& e) {
    ExampleResult r = skeleton(example, config_);
    r.status = ExampleStatus::kErrored;
    r.note = e.what();
    return r;
  }
}

std::vector<RankedCandidate> DialogEngine::rank(const Example& example,
                                                std::span<const QaPair> history,
                                                std::span<const std::string> asked,
                                                std::span<const CandidateQuestion> pool) {
  switch (config_.ranking_mode) {
    case RankingMode::kLikelihood:
      return rank_likelihood(pool);
    case RankingMode::kCoherence:
      return rank_coherence(judge_, example.procedure_text, history, pool);
    case RankingMode::kDiversity:
      return rank_diversity(backend_, pool, asked);
  }
  throw ValidationError("unknown ranking mode");
}

ExampleResult DialogEngine::run_dialog(const Example& example) {
  ExampleResult r = skeleton(example, config_);
  Rng rng(example_seed(config_.seed, example.id));
  std::vector<std::string> asked;
  const std::string& procedure = example.procedure_text;

  for (int iteration = 1; iteration <= config_.max_iterations; ++iteration) {
    const auto& raw_history = r.state.turns;
    const std::string vqg_prompt = build_vqg_prompt(procedure, raw_history, config_.gpt_compat);
    CandidateBatch batch = backend_.generate_candidates(vqg_prompt, config_.max_candidates);
    if (batch.skip) {
      r.status = ExampleStatus::kSkipped;
      r.note = "vqg_no_content";
      return r;
    }
    std::vector<CandidateQuestion> pool = std::move(batch.candidates);
    for (auto& c : pool) c.source = CandidateSource::kDialogContext;

    if (config_.icl_enabled) {
      const std::size_t keep = std::min<std::size_t>(2, asked.size());
      const std::span<const std::string> recent(asked.data() + asked.size() - keep, keep);
      const std::string icl_prompt = build_icl_prompt(procedure, bank_, recent, rng);
      CandidateBatch icl = backend_.generate_candidates(icl_prompt, config_.max_candidates);
      for (auto& c : icl.candidates) {
        c.source = CandidateSource::kIcl;
        pool.push_back(std::move(c));
      }
    }

    if (config_.length_penalty) pool = apply_length_penalty(pool, *config_.length_penalty);

    // Constrained-decoding output must look like a yes/no question; the
    // unconstrained fallback output is kept regardless.
    std::erase_if(pool, [](const CandidateQuestion& c) {
      return !c.unconstrained && !validate_question_surface(c.text);
    });
    pool = dedup(pool, asked);

    if (pool.empty()) {
      if (r.state.turns.empty()) {
        r.status = ExampleStatus::kSkipped;
        r.note = "no_candidates";
        return r;
      }
      r.state.stop_reason = StopReason::kMaxIterations;
      r.note = "candidates_exhausted at iteration " + std::to_string(iteration);
      break;
    }

    const auto history = filtered_history(r.state);
    std::vector<RankedCandidate> ranked = rank(example, history, asked, pool);
    const std::string question = ranked.front().candidate.text;
    r.turn_records.push_back({iteration, vqg_prompt, std::move(ranked)});

    const Answer answer = classify_answer(
        checked(backend_.answer_yes_probability(question, example.frame_ref), "yes probability"));
    r.state.turns.push_back({question, answer, iteration});
    asked.push_back(question);

    // The success prompt is built fresh each time and never enters the
    // history used for later question generation.
    const std::string success_prompt = build_success_prompt(procedure, r.state.turns);
    r.state.success_likelihoods.push_back(checked(
        backend_.success_yes_probability(success_prompt, example.frame_ref), "success likelihood"));

    const auto stop =
        config_.disable_early_stop
            ? (iteration >= config_.max_iterations ? std::optional(StopReason::kMaxIterations)
                                                   : std::nullopt)
            : should_stop(r.state.success_likelihoods, config_.delta, config_.epsilon,
                          config_.max_iterations);
    if (stop) {
      r.state.stop_reason = *stop;
      break;
    }
  }

  finish_decision(r, config_.tau);
  r.turn_metrics = score_turns(judge_, procedure, r.state.turns, example.label);
  r.metrics = aggregate_example(r.turn_metrics, r.state.success_likelihoods, example.label);
  return r;
}

ExampleResult DialogEngine::run_rationale_free(const Example& example) {
  ExampleResult r = skeleton(example, config_);
  const std::string prompt = build_success_prompt(example.procedure_text, {}, true);
  r.state.success_likelihoods.push_back(
      checked(backend_.success_yes_probability(prompt, example.frame_ref), "success likelihood"));
  r.state.stop_reason = StopReason::kRationaleFree;
  finish_decision(r, config_.tau);
  r.metrics = aggregate_example({}, r.state.success_likelihoods, example.label);
  return r;
}

std::vector<ExampleResult> evaluate(std::span<const Example> examples, DialogEngine& engine,
                                    int workers) {
  std::vector<ExampleResult> results(examples.size());
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(examples.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < examples.size(); i = next.fetch_add(1)) {
      results[i] = engine.run(examples[i]);
    }
  };
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
  }
  std::sort(results.begin(), results.end(),
            [](const ExampleResult& a, const ExampleResult& b) { return a.id < b.id; });
  return results;
}

ExampleResult truncate_result(const ExampleResult& full, int turns, StopReason reason, double tau) {
  if (full.status != ExampleStatus::kOk) return full;
  const int available = static_cast<int>(full.state.success_likelihoods.size());
  if (turns < 1 || turns > available) throw ValidationError("truncate_result: bad turn count");
  ExampleResult r = full;
  const auto k = static_cast<std::size_t>(turns);
  r.state.success_likelihoods.resize(k);
  if (r.state.turns.size() > k) r.state.turns.resize(k);
  if (r.turn_metrics.size() > k) r.turn_metrics.resize(k);
  if (r.turn_records.size() > k) r.turn_records.resize(k);
  r.state.stop_reason = reason;
  finish_decision(r, tau);
  r.metrics = aggregate_example(r.turn_metrics, r.state.success_likelihoods, r.label);
  return r;
}

}  // namespace pmd

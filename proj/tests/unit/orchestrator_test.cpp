#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <vector>

#include "pmd/errors.hpp"
#include "pmd/orchestrator.hpp"

using namespace pmd;

namespace {

int count_turns(const std::string& prompt) {
  int n = 0;
  for (auto pos = prompt.find("\nA: "); pos != std::string::npos; pos = prompt.find("\nA: ", pos + 1)) {
    ++n;
  }
  return n;
}

// Programmable backend: success likelihoods follow a per-turn sequence and
// every prompt is recorded.
class FakeBackend final : public Backend {
 public:
  std::vector<CandidateQuestion> dialog_candidates;
  std::vector<CandidateQuestion> icl_candidates;
  std::map<std::string, double> vqa;
  double default_vqa = 0.9;
  std::vector<double> success = {0.5};
  double rationale_free_success = 0.5;
  std::function<double(const std::string&)> entail_fn = [](const std::string&) { return 0.5; };
  bool vqg_skip = false;
  bool content_filter = false;
  int fail_vqa_at_call = -1;
  bool skip_asked = true;

  CandidateBatch generate_candidates(const std::string& prompt, int max_candidates) override {
    std::lock_guard lock(mu_);
    vqg_prompts.push_back(prompt);
    CandidateBatch b;
    b.skip = vqg_skip;
    if (vqg_skip) return b;
    const auto& src = prompt.starts_with("Here are some procedures") ? icl_candidates : dialog_candidates;
    for (const auto& c : src) {
      // A generator conditioned on the history does not re-propose it.
      if (skip_asked && prompt.find("Q: " + c.text + "\n") != std::string::npos) continue;
      if (static_cast<int>(b.candidates.size()) < max_candidates) b.candidates.push_back(c);
    }
    return b;
  }
  double answer_yes_probability(const std::string& question, const std::string&) override {
    std::lock_guard lock(mu_);
    if (++vqa_calls == fail_vqa_at_call) throw BackendUnavailable("connection reset");
    auto it = vqa.find(question);
    return it == vqa.end() ? default_vqa : it->second;
  }
  double success_yes_probability(const std::string& prompt, const std::string&) override {
    std::lock_guard lock(mu_);
    success_prompts.push_back(prompt);
    if (content_filter) throw ContentFiltered("refused");
    if (prompt.find("Based on the image, has") != std::string::npos) return rationale_free_success;
    const int n = count_turns(prompt);
    return success[std::min<std::size_t>(static_cast<std::size_t>(n - 1), success.size() - 1)];
  }
  std::string rephrase(const std::string& q, AnswerValue a) override { return concatenate_qa(q, a); }
  double entail(const std::string& premise, const std::string&) override { return entail_fn(premise); }
  std::vector<double> embed(const std::string& text) override {
    auto it = embeddings.find(text);
    return it == embeddings.end() ? std::vector<double>{1.0, 0.0} : it->second;
  }

  std::map<std::string, std::vector<double>> embeddings;
  std::vector<std::string> vqg_prompts;
  std::vector<std::string> success_prompts;
  int vqa_calls = 0;

 private:
  std::mutex mu_;
};

CandidateQuestion cand(std::string text, double ll, bool unconstrained = false) {
  CandidateQuestion c;
  c.text = std::move(text);
  c.log_likelihood = ll;
  c.token_count = whitespace_token_count(c.text);
  c.unconstrained = unconstrained;
  return c;
}

std::vector<CandidateQuestion> many_candidates(int n) {
  std::vector<CandidateQuestion> out;
  for (int i = 0; i < n; ++i) out.push_back(cand("Is item " + std::to_string(i) + " visible?", -0.1 * (i + 1)));
  return out;
}

Example example(std::string id = "ex-1", Label label = Label::kSuccess) {
  Example e;
  e.id = std::move(id);
  e.procedure_text = "Fold the cloth.";
  e.frame_ref = "frames/" + e.id + ".jpg";
  e.label = label;
  e.mistake_type = label == Label::kMistake ? MistakeType::kWrongVerb : MistakeType::kNone;
  return e;
}

}  // namespace

TEST(ShouldStop, ConfidentOnFirstValue) {
  const std::vector<double> p = {0.97};
  EXPECT_EQ(should_stop(p, 0.1, 0.05, 10), StopReason::kConfident);
  const std::vector<double> low = {0.03};
  EXPECT_EQ(should_stop(low, 0.1, 0.05, 10), StopReason::kConfident);
}

TEST(ShouldStop, Stabilized) {
  const std::vector<double> p = {0.60, 0.62, 0.63};
  EXPECT_EQ(should_stop(p, 0.05, 0.025, 10), StopReason::kStabilized);
}

TEST(ShouldStop, MaxIterations) {
  const std::vector<double> p = {0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9};
  EXPECT_EQ(should_stop(p, 0.05, 0.025, 10), StopReason::kMaxIterations);
  EXPECT_EQ(should_stop(std::span(p).first(9), 0.05, 0.025, 10), std::nullopt);
}

TEST(ShouldStop, EmptyIsNone) { EXPECT_EQ(should_stop({}, 0.1, 0.05, 10), std::nullopt); }

TEST(Decide, InclusiveThreshold) {
  EXPECT_EQ(decide(0.5, 0.5), Label::kMistake);
  EXPECT_EQ(decide(std::nextafter(0.5, 0.0), 0.5), Label::kSuccess);
  EXPECT_EQ(decide(1.0, 1.0), Label::kMistake);
}

TEST(RunConfig, Validation) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<std::function<void(RunConfig&)>>{
           [](RunConfig& r) { r.max_iterations = 0; }, [](RunConfig& r) { r.delta = 0.0; },
           [](RunConfig& r) { r.epsilon = 0.5; }, [](RunConfig& r) { r.tau = 0.0; },
           [](RunConfig& r) { r.tau = 1.01; }, [](RunConfig& r) { r.max_candidates = 0; }}) {
    RunConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ValidationError);
  }
  FakeBackend b;
  RunConfig bad;
  bad.epsilon = 0.7;
  EXPECT_THROW(DialogEngine(b, bad), ValidationError);
}

TEST(RunDialog, ConfidentAfterOneTurn) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(4);
  b.success = {0.99};
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  ASSERT_EQ(r.status, ExampleStatus::kOk);
  EXPECT_EQ(r.state.turns.size(), 1u);
  EXPECT_EQ(r.state.stop_reason, StopReason::kConfident);
  EXPECT_NEAR(r.state.mistake_likelihood_final, 0.01, 1e-15);
  EXPECT_EQ(r.state.decision, Label::kSuccess);
  EXPECT_TRUE(r.correct());
  EXPECT_EQ(r.state.turns[0].question, "Is item 0 visible?");
  EXPECT_EQ(r.turn_records.size(), 1u);
  EXPECT_EQ(r.turn_metrics.size(), 1u);
  EXPECT_EQ(r.metrics.iterations, 1);
}

TEST(RunDialog, StabilizesAfterThree) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(6);
  b.success = {0.3, 0.6, 0.62, 0.63, 0.9};
  RunConfig c;
  c.delta = 0.05;
  c.epsilon = 0.025;
  DialogEngine engine(b, c);
  const auto r = engine.run(example());
  EXPECT_EQ(r.state.turns.size(), 4u);
  EXPECT_EQ(r.state.stop_reason, StopReason::kStabilized);
  EXPECT_EQ(r.state.success_likelihoods, (std::vector<double>{0.3, 0.6, 0.62, 0.63}));
}

TEST(RunDialog, CapAtMaxIterationsWithoutRepeats) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(12);
  b.success = {0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.2, 0.8, 0.1, 0.9, 0.5, 0.5};
  RunConfig c;
  c.epsilon = 0.05;
  DialogEngine engine(b, c);
  const auto r = engine.run(example());
  EXPECT_EQ(r.state.turns.size(), 10u);
  EXPECT_EQ(r.state.stop_reason, StopReason::kMaxIterations);
  std::set<std::string> seen;
  for (const auto& t : r.state.turns) EXPECT_TRUE(seen.insert(t.question).second) << t.question;
  EXPECT_EQ(r.state.success_likelihoods.size(), r.state.turns.size());
  for (std::size_t i = 0; i < r.state.turns.size(); ++i) {
    EXPECT_EQ(r.state.turns[i].iteration_index, static_cast<int>(i) + 1);
  }
}

TEST(RunDialog, DisableEarlyStopRunsFullLength) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(12);
  b.success = {0.99};
  RunConfig c;
  c.disable_early_stop = true;
  c.max_iterations = 6;
  DialogEngine engine(b, c);
  const auto r = engine.run(example());
  EXPECT_EQ(r.state.turns.size(), 6u);
  EXPECT_EQ(r.state.stop_reason, StopReason::kMaxIterations);
}

TEST(RunDialog, CandidateExhaustionStopsAndIsRecorded) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(2);
  b.skip_asked = false;
  b.success = {0.4, 0.6, 0.4, 0.6};
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  EXPECT_EQ(r.status, ExampleStatus::kOk);
  EXPECT_EQ(r.state.turns.size(), 2u);
  EXPECT_EQ(r.state.stop_reason, StopReason::kMaxIterations);
  EXPECT_NE(r.note.find("candidates_exhausted"), std::string::npos);
}

TEST(RunDialog, NoCandidatesAtAllSkips) {
  FakeBackend b;
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  EXPECT_EQ(r.status, ExampleStatus::kSkipped);
  EXPECT_FALSE(r.correct());
}

TEST(RunDialog, VqgNoContentSkips) {
  FakeBackend b;
  b.vqg_skip = true;
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  EXPECT_EQ(r.status, ExampleStatus::kSkipped);
  EXPECT_EQ(r.note, "vqg_no_content");
}

TEST(RunDialog, ContentFilterSkips) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(4);
  b.content_filter = true;
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  EXPECT_EQ(r.status, ExampleStatus::kSkipped);
  EXPECT_NE(r.note.find("content_filtered"), std::string::npos);
}

TEST(RunDialog, BackendFailureMarksErrored) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(6);
  b.success = {0.5, 0.3, 0.7};
  b.fail_vqa_at_call = 2;
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  EXPECT_EQ(r.status, ExampleStatus::kErrored);
  EXPECT_NE(r.note.find("connection reset"), std::string::npos);
}

TEST(RunDialog, UnsureTurnsStayInPromptsButNotMetrics) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(4);
  b.vqa["Is item 0 visible?"] = 0.5;
  b.success = {0.5, 0.99};
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  ASSERT_EQ(r.state.turns.size(), 2u);
  EXPECT_EQ(r.state.turns[0].answer.value, AnswerValue::kUnsure);
  ASSERT_GE(b.vqg_prompts.size(), 2u);
  EXPECT_NE(b.vqg_prompts[1].find("Q: Is item 0 visible?\nA: Unsure\n"), std::string::npos);
  EXPECT_FALSE(r.turn_metrics[0].informativeness.has_value());
  EXPECT_TRUE(r.turn_metrics[1].informativeness.has_value());
}

TEST(RunDialog, SuccessPromptNeverEntersLaterVqgPrompts) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(8);
  b.success = {0.3, 0.7, 0.3, 0.7, 0.3};
  RunConfig c;
  c.max_iterations = 5;
  DialogEngine engine(b, c);
  engine.run(example());
  ASSERT_EQ(b.vqg_prompts.size(), 5u);
  for (const auto& p : b.vqg_prompts) {
    EXPECT_EQ(p.find("Based on the image"), std::string::npos);
    EXPECT_EQ(p.find("been successfully completed"), std::string::npos);
  }
  ASSERT_EQ(b.success_prompts.size(), 5u);
  EXPECT_NE(b.success_prompts[4].find("Based on the image and above information"), std::string::npos);
}

TEST(RunDialog, SurfaceInvalidConstrainedCandidatesDroppedFallbackKept) {
  FakeBackend b;
  b.dialog_candidates = {cand("Is the cloth folded or flat?", -0.1),
                         cand("cloth folded", -0.2, true), cand("Is the cloth folded?", -0.3)};
  b.success = {0.99};
  DialogEngine engine(b, RunConfig{});
  const auto r = engine.run(example());
  ASSERT_EQ(r.turn_records.size(), 1u);
  const auto& ranked = r.turn_records[0].ranked;
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(r.state.turns[0].question, "cloth folded");
  EXPECT_FALSE(ranked[0].surface_valid);
  EXPECT_TRUE(ranked[0].candidate.unconstrained);
}

TEST(RunDialog, IclCandidatesMergedWithSourceTags) {
  FakeBackend b;
  b.dialog_candidates = {cand("Is the cloth on the table?", -1.0)};
  b.icl_candidates = {cand("Is the cloth folded?", -0.5), cand("Is there a cloth?", -2.0)};
  b.success = {0.99};
  RunConfig c;
  c.icl_enabled = true;
  c.seed = 5;
  DialogEngine engine(b, c);
  const auto r = engine.run(example());
  ASSERT_EQ(r.turn_records[0].ranked.size(), 3u);
  EXPECT_EQ(r.state.turns[0].question, "Is the cloth folded?");
  EXPECT_EQ(r.turn_records[0].ranked[0].candidate.source, CandidateSource::kIcl);
  EXPECT_EQ(r.turn_records[0].ranked[1].candidate.source, CandidateSource::kDialogContext);
  ASSERT_EQ(b.vqg_prompts.size(), 2u);
  EXPECT_TRUE(b.vqg_prompts[1].starts_with("Here are some procedures"));

  FakeBackend b2 = FakeBackend();
  b2.dialog_candidates = b.dialog_candidates;
  b2.icl_candidates = b.icl_candidates;
  b2.success = b.success;
  DialogEngine again(b2, c);
  EXPECT_EQ(again.run(example()), r);
  EXPECT_EQ(b2.vqg_prompts, b.vqg_prompts);
}

TEST(RunDialog, LengthPenaltyCanChangeTheChoice) {
  FakeBackend b;
  b.dialog_candidates = {cand("Is it on?", -1.0), cand("Is the big red lid on the jar?", -1.2)};
  b.success = {0.99};
  DialogEngine plain(b, RunConfig{});
  EXPECT_EQ(plain.run(example()).state.turns[0].question, "Is it on?");
  RunConfig c;
  c.length_penalty = -1.0;
  DialogEngine penalised(b, c);
  EXPECT_EQ(penalised.run(example()).state.turns[0].question, "Is the big red lid on the jar?");
}

TEST(RunDialog, CoherenceAndLikelihoodPickDifferentQuestions) {
  FakeBackend b;
  b.dialog_candidates = {cand("Is the light on?", -0.1), cand("Is the cloth folded?", -1.5)};
  b.success = {0.99};
  // Only statements about the cloth move the NLI judgement.
  b.entail_fn = [](const std::string& premise) {
    if (premise.find("cloth folded? Yes") != std::string::npos) return 0.95;
    if (premise.find("cloth folded? No") != std::string::npos) return 0.05;
    return 0.5;
  };
  DialogEngine by_likelihood(b, RunConfig{});
  RunConfig c;
  c.ranking_mode = RankingMode::kCoherence;
  DialogEngine by_coherence(b, c);
  const auto rl = by_likelihood.run(example());
  const auto rc = by_coherence.run(example());
  EXPECT_EQ(rl.state.turns[0].question, "Is the light on?");
  EXPECT_EQ(rc.state.turns[0].question, "Is the cloth folded?");
  EXPECT_EQ(rc.turn_records[0].ranked[1].score, 0.0);
  EXPECT_EQ(rc.ranking_mode, RankingMode::kCoherence);
  EXPECT_NEAR(rc.metrics.example_relevance.value(), 0.9, 1e-12);
  EXPECT_NEAR(rl.metrics.example_relevance.value(), 0.0, 1e-12);
}

TEST(RunDialog, DiversityUsesPreviousQuestions) {
  FakeBackend b;
  b.dialog_candidates = {cand("Is a?", -0.1), cand("Is b?", -0.2), cand("Is c?", -0.3)};
  b.embeddings = {{"Is a?", {1, 0}}, {"Is b?", {0.99, 0.1}}, {"Is c?", {0, 1}}};
  b.success = {0.3, 0.7, 0.3};
  RunConfig c;
  c.ranking_mode = RankingMode::kDiversity;
  c.max_iterations = 2;
  DialogEngine engine(b, c);
  const auto r = engine.run(example());
  ASSERT_EQ(r.state.turns.size(), 2u);
  EXPECT_EQ(r.state.turns[0].question, "Is a?");
  EXPECT_EQ(r.turn_records[0].ranked[0].score_kind, RankingMode::kLikelihood);
  EXPECT_EQ(r.state.turns[1].question, "Is c?");
  EXPECT_EQ(r.turn_records[1].ranked[0].score_kind, RankingMode::kDiversity);
}

TEST(RunRationaleFree, HalfProbability) {
  FakeBackend b;
  b.rationale_free_success = 0.5;
  RunConfig c;
  c.rationale_free = true;
  DialogEngine engine(b, c);
  const auto r = engine.run(example());
  EXPECT_EQ(r.state.turns.size(), 0u);
  EXPECT_EQ(r.state.success_likelihoods.size(), 1u);
  EXPECT_EQ(r.state.stop_reason, StopReason::kRationaleFree);
  EXPECT_EQ(r.state.decision, Label::kMistake);
  EXPECT_EQ(r.metrics.information_gain, 0.0);
  EXPECT_FALSE(r.metrics.example_relevance.has_value());
  EXPECT_FALSE(r.metrics.example_informativeness.has_value());
  EXPECT_TRUE(b.vqg_prompts.empty());
  ASSERT_EQ(b.success_prompts.size(), 1u);
  EXPECT_EQ(b.success_prompts[0].find("above information"), std::string::npos);
}

TEST(RunRationaleFree, CertainSuccess) {
  FakeBackend b;
  b.rationale_free_success = 1.0;
  RunConfig c;
  c.rationale_free = true;
  DialogEngine engine(b, c);
  const auto r = engine.run(example());
  EXPECT_EQ(r.state.decision, Label::kSuccess);
  EXPECT_EQ(r.metrics.decision_error, 0.0);
  EXPECT_EQ(r.metrics.information_gain, 1.0);
}

TEST(RunRationaleFree, AccuracyMatchesThresholdCount) {
  FakeBackend b;
  std::vector<Example> examples;
  const std::vector<double> likelihoods = {0.05, 0.2, 0.35, 0.49, 0.5, 0.51, 0.66, 0.8, 0.93, 1.0};
  int correct = 0;
  RunConfig c;
  c.rationale_free = true;
  c.tau = 0.4;
  std::vector<ExampleResult> results;
  for (std::size_t i = 0; i < likelihoods.size(); ++i) {
    const Label label = i % 3 == 0 ? Label::kMistake : Label::kSuccess;
    b.rationale_free_success = likelihoods[i];
    DialogEngine engine(b, c);
    const auto r = engine.run(example("rf-" + std::to_string(i), label));
    results.push_back(r);
    const bool predicted_mistake = 1.0 - likelihoods[i] >= 0.4;
    if (predicted_mistake == (label == Label::kMistake)) ++correct;
  }
  int engine_correct = 0;
  for (const auto& r : results) engine_correct += r.correct() ? 1 : 0;
  EXPECT_EQ(engine_correct, correct);
}

TEST(Evaluate, SortedByIdAndWorkerIndependent) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(12);
  b.success = {0.3, 0.7, 0.4, 0.45, 0.47, 0.9};
  std::vector<Example> examples;
  for (int i = 9; i >= 0; --i) examples.push_back(example("id-" + std::to_string(i), i % 2 ? Label::kMistake : Label::kSuccess));
  RunConfig c;
  c.ranking_mode = RankingMode::kCoherence;
  DialogEngine e1(b, c);
  const auto serial = evaluate(examples, e1, 1);
  DialogEngine e4(b, c);
  const auto parallel = evaluate(examples, e4, 4);
  EXPECT_EQ(serial, parallel);
  ASSERT_EQ(serial.size(), 10u);
  for (std::size_t i = 1; i < serial.size(); ++i) EXPECT_LT(serial[i - 1].id, serial[i].id);
  EXPECT_TRUE(evaluate({}, e1, 4).empty());
}

TEST(TruncateResult, MatchesShorterRun) {
  FakeBackend b;
  b.dialog_candidates = many_candidates(12);
  b.success = {0.3, 0.7, 0.4, 0.45, 0.47, 0.9};
  b.entail_fn = [](const std::string& premise) { return premise.size() % 7 / 7.0; };
  RunConfig full_cfg;
  full_cfg.disable_early_stop = true;
  DialogEngine full_engine(b, full_cfg);
  const auto full = full_engine.run(example("t", Label::kMistake));
  ASSERT_EQ(full.state.turns.size(), 10u);

  RunConfig short_cfg;
  short_cfg.max_iterations = 4;
  short_cfg.disable_early_stop = true;
  DialogEngine short_engine(b, short_cfg);
  const auto shorter = short_engine.run(example("t", Label::kMistake));
  EXPECT_EQ(truncate_result(full, 4, StopReason::kMaxIterations, short_cfg.tau), shorter);
  EXPECT_THROW(truncate_result(full, 0, StopReason::kMaxIterations, 0.5), ValidationError);
  EXPECT_THROW(truncate_result(full, 11, StopReason::kMaxIterations, 0.5), ValidationError);
}

TEST(ExampleStatus, Names) {
  for (ExampleStatus s : {ExampleStatus::kOk, ExampleStatus::kSkipped, ExampleStatus::kErrored}) {
    EXPECT_EQ(parse_example_status(to_string(s)), s);
  }
  EXPECT_THROW(parse_example_status("done"), ValidationError);
}

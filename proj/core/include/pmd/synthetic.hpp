#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pmd/backend.hpp"
#include "pmd/domain.hpp"

namespace pmd {

struct SynthConfig {
  int count = 20;
  int mistakes = 10;  // how many of `count` are labeled mistake
  std::uint64_t seed = 0;
  int embed_dim = 16;
  // Examples whose success classification is refused by a content filter.
  int content_filtered = 0;
  // Probability that a rephrase request yields no content.
  double rephrase_no_content_rate = 0.05;
  // Probability that a generated candidate breaks the yes/no surface rules.
  double malformed_candidate_rate = 0.1;
  // Scale of the label signal in answers and success likelihoods; 0 makes
  // every response independent of the label.
  double signal = 1.0;

  /// Throws ValidationError on inconsistent settings.
  void validate() const;
};

/// Stateless, hash-driven stand-in for real models. Responses depend only on
/// the request text, the example behind a frame reference, and the seed.
class SyntheticBackend final : public Backend {
 public:
  SyntheticBackend(SynthConfig config, const std::vector<Example>& examples);

  CandidateBatch generate_candidates(const std::string& prompt, int max_candidates) override;
  double answer_yes_probability(const std::string& question, const std::string& frame_ref) override;
  double success_yes_probability(const std::string& prompt, const std::string& frame_ref) override;
  std::string rephrase(const std::string& question, AnswerValue answer) override;
  double entail(const std::string& premise, const std::string& hypothesis) override;
  std::vector<double> embed(const std::string& text) override;

 private:
  double unit(std::string_view salt, std::string_view text) const;
  const Example& example_for(const std::string& frame_ref) const;

  SynthConfig config_;
  std::map<std::string, Example> by_frame_;
};

/// Declarative statement for a yes/no question, "Is the lid on?" + No ->
/// "The lid is not on."; empty when the question has no leading auxiliary.
std::string template_statement(std::string_view question, AnswerValue answer);

/// Deterministic examples for a config: ids syn-000.., mistakes spread by
/// the seed, mistake types cycled.
std::vector<Example> synthetic_examples(const SynthConfig& config);

struct SynthOutput {
  std::vector<Example> examples;
  std::string dataset_jsonl;
  std::string fixture_json;
};

/// A dataset plus a scripted fixture recorded from SyntheticBackend while
/// running every ranking mode with and without ICL, full length (early
/// stopping off), and the rationale-free baseline, all under the default
/// run settings with run seed = config.seed. Replaying any of those runs,
/// or any early-stopped variant, never misses the fixture.
SynthOutput generate_synthetic_fixture(const SynthConfig& config);

}  // namespace pmd

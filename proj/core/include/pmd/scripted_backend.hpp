#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmd/backend.hpp"

namespace pmd {

// Fixture lookup keys: SHA-256 over "<kind>\n<canonical payload JSON>",
// where the payload is a compact JSON object with sorted keys:
//   vqg              {"prompt"}
//   vqa              {"frame_ref", "question"}
//   success_classify {"frame_ref", "prompt"}
//   rephrase         {"answer", "question"}      answer is "Yes" or "No"
//   entail           {"hypothesis", "premise"}
//   embed            {"text"}
std::string vqg_key(std::string_view prompt);
std::string vqa_key(std::string_view question, std::string_view frame_ref);
std::string success_key(std::string_view prompt, std::string_view frame_ref);
std::string rephrase_key(std::string_view question, AnswerValue answer);
std::string entail_key(std::string_view premise, std::string_view hypothesis);
std::string embed_key(std::string_view text);

inline constexpr int kFixtureVersion = 1;

struct FixtureHeader {
  int version = kFixtureVersion;
  int embed_dim = 16;
  double entail_prior = 0.5;  // used for an empty premise with no entry
  std::optional<std::uint64_t> run_seed;  // seed the fixture was recorded with
};

/// Accumulates fixture entries and serialises the fixture file. Later
/// additions for the same key replace earlier ones.
class FixtureBuilder {
 public:
  explicit FixtureBuilder(FixtureHeader header = {});
  ~FixtureBuilder();
  FixtureBuilder(FixtureBuilder&&) noexcept;
  FixtureBuilder& operator=(FixtureBuilder&&) noexcept;

  void add_candidates(const std::string& prompt, const std::vector<CandidateQuestion>& candidates);
  void add_vqg_no_content(const std::string& prompt);
  void add_vqa(const std::string& question, const std::string& frame_ref, double yes_probability);
  void add_vqa_logprobs(const std::string& question, const std::string& frame_ref,
                        const TokenProbPair& pair);
  void add_success(const std::string& prompt, const std::string& frame_ref, double yes_probability);
  void add_content_filtered(const std::string& prompt, const std::string& frame_ref);
  void add_rephrase(const std::string& question, AnswerValue answer, const std::string& statement);
  void add_rephrase_no_content(const std::string& question, AnswerValue answer);
  void add_entail(const std::string& premise, const std::string& hypothesis, double probability);
  void add_entail_logits(const std::string& premise, const std::string& hypothesis,
                         double entail_logit, double contra_logit);
  void add_embedding(const std::string& text, const std::vector<double>& vector);

  FixtureHeader& header();
  std::size_t size() const;

  /// Deterministic serialisation (keys sorted, two-space indent).
  std::string dump() const;
  void write(const std::filesystem::path& path) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Replays a fixture file. Unmatched keys fall back to kind-specific
/// defaults and are counted as misses.
class ScriptedBackend final : public Backend {
 public:
  static ScriptedBackend from_file(const std::filesystem::path& path);
  static ScriptedBackend from_string(const std::string& fixture_json);

  ScriptedBackend(ScriptedBackend&&) noexcept;
  ~ScriptedBackend() override;

  CandidateBatch generate_candidates(const std::string& prompt, int max_candidates) override;
  double answer_yes_probability(const std::string& question, const std::string& frame_ref) override;
  double success_yes_probability(const std::string& prompt, const std::string& frame_ref) override;
  std::string rephrase(const std::string& question, AnswerValue answer) override;
  double entail(const std::string& premise, const std::string& hypothesis) override;
  std::vector<double> embed(const std::string& text) override;

  const FixtureHeader& header() const;
  std::size_t entry_count() const;
  std::uint64_t misses() const;
  std::uint64_t misses(RequestKind kind) const;

 private:
  struct Impl;
  explicit ScriptedBackend(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Deterministic pseudo-embedding used when no fixture vector exists:
/// a unit vector derived from SHA-256 of the text.
std::vector<double> hashed_embedding(std::string_view text, int dim);

/// Forwards every call to `inner` and records the response in a fixture.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(Backend& inner, FixtureBuilder& sink) : inner_(inner), sink_(sink) {}

  CandidateBatch generate_candidates(const std::string& prompt, int max_candidates) override;
  double answer_yes_probability(const std::string& question, const std::string& frame_ref) override;
  double success_yes_probability(const std::string& prompt, const std::string& frame_ref) override;
  std::string rephrase(const std::string& question, AnswerValue answer) override;
  double entail(const std::string& premise, const std::string& hypothesis) override;
  std::vector<double> embed(const std::string& text) override;

 private:
  Backend& inner_;
  FixtureBuilder& sink_;
  std::mutex mu_;
};

}  // namespace pmd

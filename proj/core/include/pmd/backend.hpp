#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pmd/domain.hpp"

namespace pmd {

enum class RequestKind : std::uint8_t {
  kVqg,
  kVqa,
  kSuccessClassify,
  kRephrase,
  kEmbed,
  kEntail,
};
inline constexpr std::size_t kRequestKindCount = 6;

std::string_view to_string(RequestKind kind);

/// First-position log probabilities of the Yes and No tokens as reported by
/// a top-k logprob API. A token outside the top-k is absent, not zero.
struct TokenProbPair {
  std::optional<double> yes_logprob;
  std::optional<double> no_logprob;
};

/// Probability of Yes among {Yes, No}. Softmax when both are present; an
/// absent token has probability 0; both absent gives 0.5.
double normalize_top_logprobs(const TokenProbPair& pair);

/// Two-way softmax over entailment and contradiction scores; the neutral
/// score takes no part.
double entailment_probability(double entail_logit, double contra_logit);

/// Fallback statement when a rephrase request yields no content:
/// "Is the lid on?" + No -> "Is the lid on? No".
std::string concatenate_qa(std::string_view question, AnswerValue answer);

struct CandidateBatch {
  std::vector<CandidateQuestion> candidates;  // descending log-likelihood
  // Set when the backend returned no content on both attempts. The
  // orchestrator skips the example.
  bool skip = false;
};

/// All model capabilities the self-dialog needs. Implementations must be
/// safe to call from several worker threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual CandidateBatch generate_candidates(const std::string& prompt, int max_candidates) = 0;
  virtual double answer_yes_probability(const std::string& question,
                                        const std::string& frame_ref) = 0;
  virtual double success_yes_probability(const std::string& prompt,
                                         const std::string& frame_ref) = 0;
  virtual std::string rephrase(const std::string& question, AnswerValue answer) = 0;
  virtual double entail(const std::string& premise, const std::string& hypothesis) = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

/// Decorator that counts calls per request kind.
class CountingBackend final : public Backend {
 public:
  explicit CountingBackend(Backend& inner) : inner_(inner) {}

  CandidateBatch generate_candidates(const std::string& prompt, int max_candidates) override;
  double answer_yes_probability(const std::string& question, const std::string& frame_ref) override;
  double success_yes_probability(const std::string& prompt, const std::string& frame_ref) override;
  std::string rephrase(const std::string& question, AnswerValue answer) override;
  double entail(const std::string& premise, const std::string& hypothesis) override;
  std::vector<double> embed(const std::string& text) override;

  std::uint64_t calls(RequestKind kind) const;
  std::uint64_t total_calls() const;

 private:
  void bump(RequestKind kind);

  Backend& inner_;
  std::array<std::atomic<std::uint64_t>, kRequestKindCount> counts_{};
};

}  // namespace pmd

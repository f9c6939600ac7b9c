#pragma once

#include <atomic>
#include <cstdint>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pmd/backend.hpp"
#include "pmd/domain.hpp"

namespace pmd {

struct EntailmentQuery {
  std::vector<std::string> premise_statements;  // dialog order
  std::string hypothesis;
};

/// `The procedure "<procedure_text>" has been successfully executed.`
/// Quotes inside the text are kept verbatim. Throws on empty input.
std::string hypothesis_for(std::string_view procedure_text);

/// Statements joined by single spaces, each ending in a period.
std::string join_premise(std::span<const std::string> statements);

/// Judges procedure success from a rationale with an NLI model:
/// p_e = entail(rephrased statements, success hypothesis).
///
/// Entailment and rephrase results are memoised for the lifetime of the
/// judge. Reads are concurrent; a duplicate concurrent miss may call the
/// backend twice, which is harmless since results are identical.
class NliJudge {
 public:
  explicit NliJudge(Backend& backend) : backend_(backend) {}

  /// `qa_pairs` must already be Unsure-filtered. Empty pairs query the model
  /// with an empty premise.
  double success_probability(std::string_view procedure_text, std::span<const QaPair> qa_pairs);

  EntailmentQuery build_query(std::string_view procedure_text, std::span<const QaPair> qa_pairs);

  double entail_cached(const std::string& premise, const std::string& hypothesis);
  std::string rephrase_cached(const std::string& question, AnswerValue answer);

  std::uint64_t cache_hits() const { return hits_.load(std::memory_order_relaxed); }
  std::uint64_t cache_misses() const { return misses_.load(std::memory_order_relaxed); }
  std::size_t cache_size() const;

  Backend& backend() { return backend_; }

 private:
  Backend& backend_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, double> entail_cache_;
  std::unordered_map<std::string, std::string> rephrase_cache_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace pmd

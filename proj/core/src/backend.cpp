#include "pmd/backend.hpp"

#include <algorithm>
#include <cmath>

namespace pmd {

std::string_view to_string(RequestKind kind) {
  switch (kind) {
    case RequestKind::kVqg:
      return "vqg";
    case RequestKind::kVqa:
      return "vqa";
    case RequestKind::kSuccessClassify:
      return "success_classify";
    case RequestKind::kRephrase:
      return "rephrase";
    case RequestKind::kEmbed:
      return "embed";
    case RequestKind::kEntail:
      return "entail";
  }
  return "?";
}

double normalize_top_logprobs(const TokenProbPair& pair) {
  if (pair.yes_logprob && pair.no_logprob) {
    // softmax, shifted by the max for stability
    const double m = std::max(*pair.yes_logprob, *pair.no_logprob);
    const double y = std::exp(*pair.yes_logprob - m);
    const double n = std::exp(*pair.no_logprob - m);
    return y / (y + n);
  }
  if (pair.yes_logprob) return 1.0;
  if (pair.no_logprob) return 0.0;
  return 0.5;
}

double entailment_probability(double entail_logit, double contra_logit) {
  return normalize_top_logprobs({entail_logit, contra_logit});
}

std::string concatenate_qa(std::string_view question, AnswerValue answer) {
  std::string out(question);
  out.push_back(' ');
  out.append(to_string(answer));
  return out;
}

void CountingBackend::bump(RequestKind kind) {
  counts_[static_cast<std::size_t>(kind)].fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t CountingBackend::calls(RequestKind kind) const {
  return counts_[static_cast<std::size_t>(kind)].load(std::memory_order_relaxed);
}

std::uint64_t CountingBackend::total_calls() const {
  std::uint64_t total = 0;
  for (const auto& c : counts_) total += c.load(std::memory_order_relaxed);
  return total;
}

CandidateBatch CountingBackend::generate_candidates(const std::string& prompt, int max_candidates) {
  bump(RequestKind::kVqg);
  return inner_.generate_candidates(prompt, max_candidates);
}

double CountingBackend::answer_yes_probability(const std::string& question,
                                               const std::string& frame_ref) {
  bump(RequestKind::kVqa);
  return inner_.answer_yes_probability(question, frame_ref);
}

double CountingBackend::success_yes_probability(const std::string& prompt,
                                                const std::string& frame_ref) {
  bump(RequestKind::kSuccessClassify);
  return inner_.success_yes_probability(prompt, frame_ref);
}

std::string CountingBackend::rephrase(const std::string& question, AnswerValue answer) {
  bump(RequestKind::kRephrase);
  return inner_.rephrase(question, answer);
}

double CountingBackend::entail(const std::string& premise, const std::string& hypothesis) {
  bump(RequestKind::kEntail);
  return inner_.entail(premise, hypothesis);
}

std::vector<double> CountingBackend::embed(const std::string& text) {
  bump(RequestKind::kEmbed);
  return inner_.embed(text);
}

}  // namespace pmd

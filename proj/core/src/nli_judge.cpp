#include "pmd/nli_judge.hpp"

#include <algorithm>
#include <mutex>

#include "pmd/errors.hpp"
#include "pmd/util.hpp"

namespace pmd {

namespace {

// Key material separated by a byte that cannot appear in either part's
// meaningful content.
std::string pair_key(std::string_view a, std::string_view b) {
  std::string key(a);
  key.push_back('\x1f');
  key.append(b);
  return key;
}

}  // namespace

std::string hypothesis_for(std::string_view procedure_text) {
  if (procedure_text.empty()) throw ValidationError("procedure text is empty");
  std::string out = "The procedure \"";
  out += procedure_text;
  out += "\" has been successfully executed.";
  return out;
}

std::string join_premise(std::span<const std::string> statements) {
  std::string out;
  for (const auto& raw : statements) {
    std::string s = trim(raw);
    if (s.empty()) continue;
    if (s.back() != '.') s.push_back('.');
    if (!out.empty()) out.push_back(' ');
    out += s;
  }
  return out;
}

std::size_t NliJudge::cache_size() const {
  std::shared_lock lock(mu_);
  return entail_cache_.size();
}

double NliJudge::entail_cached(const std::string& premise, const std::string& hypothesis) {
  const std::string key = pair_key(premise, hypothesis);
  {
    std::shared_lock lock(mu_);
    if (auto it = entail_cache_.find(key); it != entail_cache_.end()) {
      hits_.fetch_add(1, std::memory_order_relaxed);
      return it->second;
    }
  }
  misses_.fetch_add(1, std::memory_order_relaxed);
  const double p = std::clamp(backend_.entail(premise, hypothesis), 0.0, 1.0);
  std::unique_lock lock(mu_);
  entail_cache_.emplace(key, p);
  return p;
}

std::string NliJudge::rephrase_cached(const std::string& question, AnswerValue answer) {
  if (answer == AnswerValue::kUnsure) throw ValidationError("Unsure answers are never rephrased");
  const std::string key = pair_key(question, to_string(answer));
  {
    std::shared_lock lock(mu_);
    if (auto it = rephrase_cache_.find(key); it != rephrase_cache_.end()) return it->second;
  }
  std::string statement = backend_.rephrase(question, answer);
  if (trim(statement).empty()) statement = concatenate_qa(question, answer);
  std::unique_lock lock(mu_);
  return rephrase_cache_.emplace(key, std::move(statement)).first->second;
}

EntailmentQuery NliJudge::build_query(std::string_view procedure_text,
                                      std::span<const QaPair> qa_pairs) {
  EntailmentQuery q;
  q.hypothesis = hypothesis_for(procedure_text);
  q.premise_statements.reserve(qa_pairs.size());
  for (const auto& qa : qa_pairs) {
    q.premise_statements.push_back(rephrase_cached(qa.question, qa.answer));
  }
  return q;
}

double NliJudge::success_probability(std::string_view procedure_text,
                                     std::span<const QaPair> qa_pairs) {
  const EntailmentQuery q = build_query(procedure_text, qa_pairs);
  return entail_cached(join_premise(q.premise_statements), q.hypothesis);
}

}  // namespace pmd

#include "pmd/ranking.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "pmd/errors.hpp"
#include "pmd/metrics.hpp"
#include "pmd/util.hpp"

namespace pmd {

namespace {

constexpr std::array<std::string_view, 10> kLeadingVerbs = {
    "is", "are", "was", "were", "does", "do", "did", "has", "have", "had"};

constexpr std::array<std::string_view, 4> kBannedWords = {"successful", "successfully",
                                                          "completed", "procedure"};

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view w) {
  return std::find(set.begin(), set.end(), w) != set.end();
}

RankedCandidate scored(const CandidateQuestion& c, double score, RankingMode kind) {
  RankedCandidate r;
  r.candidate = c;
  r.score = score;
  r.score_kind = kind;
  r.surface_valid = validate_question_surface(c.text);
  return r;
}

}  // namespace

std::string_view to_string(RankingMode mode) {
  switch (mode) {
    case RankingMode::kLikelihood:
      return "likelihood";
    case RankingMode::kCoherence:
      return "coherence";
    case RankingMode::kDiversity:
      return "diversity";
  }
  return "?";
}

RankingMode parse_ranking_mode(std::string_view s) {
  if (s == "likelihood") return RankingMode::kLikelihood;
  if (s == "coherence") return RankingMode::kCoherence;
  if (s == "diversity") return RankingMode::kDiversity;
  throw ValidationError("unknown ranking mode: '" + std::string(s) + "'");
}

bool validate_question_surface(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty() || t.back() != '?') return false;
  const auto ws = words(t);
  if (ws.empty() || !contains(kLeadingVerbs, ws.front())) return false;
  for (const auto& w : ws) {
    if (w == "or" || contains(kBannedWords, w)) return false;
  }
  return true;
}

std::string normalize_question(std::string_view text) { return to_lower(trim(text)); }

std::vector<CandidateQuestion> dedup(std::span<const CandidateQuestion> candidates,
                                     std::span<const std::string> asked) {
  std::unordered_set<std::string> seen;
  for (const auto& q : asked) seen.insert(normalize_question(q));
  std::vector<CandidateQuestion> out;
  for (const auto& c : candidates) {
    if (seen.insert(normalize_question(c.text)).second) out.push_back(c);
  }
  return out;
}

std::vector<RankedCandidate> order_scored(std::vector<RankedCandidate> ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.candidate.text, b.candidate.log_likelihood, a.candidate.source,
                    a.candidate.token_count, a.candidate.unconstrained) <
           std::tie(b.candidate.text, a.candidate.log_likelihood, b.candidate.source,
                    b.candidate.token_count, b.candidate.unconstrained);
  });
  for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].rank = static_cast<int>(i) + 1;
  return ranked;
}

std::vector<RankedCandidate> rank_likelihood(std::span<const CandidateQuestion> candidates) {
  if (candidates.empty()) throw ValidationError("rank_likelihood: no candidates");
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(scored(c, c.log_likelihood, RankingMode::kLikelihood));
  return order_scored(std::move(out));
}

std::vector<CandidateQuestion> apply_length_penalty(std::span<const CandidateQuestion> candidates,
                                                    double l) {
  std::vector<CandidateQuestion> out(candidates.begin(), candidates.end());
  if (l == 0.0) return out;
  for (auto& c : out) {
    if (c.token_count < 1) throw ValidationError("token_count must be >= 1");
    c.log_likelihood -= l * std::log(static_cast<double>(c.token_count));
  }
  return out;
}

CoherenceScore coherence_score(NliJudge& judge, std::string_view procedure,
                               std::span<const QaPair> history, std::string_view candidate) {
  std::vector<QaPair> with(history.begin(), history.end());
  with.push_back({std::string(candidate), AnswerValue::kYes});
  const double p_yes = judge.success_probability(procedure, with);
  with.back().answer = AnswerValue::kNo;
  const double p_no = judge.success_probability(procedure, with);

  CoherenceScore s;
  s.relevance = std::abs(p_no - p_yes);
  s.max_informativeness = std::max(information_content(p_yes), information_content(p_no));
  s.score = s.relevance * s.max_informativeness;
  return s;
}

std::vector<RankedCandidate> rank_coherence(NliJudge& judge, std::string_view procedure,
                                            std::span<const QaPair> history,
                                            std::span<const CandidateQuestion> candidates) {
  if (candidates.empty()) throw ValidationError("rank_coherence: no candidates");
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    out.push_back(scored(c, coherence_score(judge, procedure, history, c.text).score,
                         RankingMode::kCoherence));
  }
  return order_scored(std::move(out));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("embedding dimension mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<RankedCandidate> rank_diversity(Backend& backend,
                                            std::span<const CandidateQuestion> candidates,
                                            std::span<const std::string> previous_questions) {
  if (candidates.empty()) throw ValidationError("rank_diversity: no candidates");
  if (previous_questions.empty()) return rank_likelihood(candidates);

  std::unordered_map<std::string, std::vector<double>> cache;
  auto embedding = [&](const std::string& text) -> const std::vector<double>& {
    auto it = cache.find(text);
    if (it == cache.end()) it = cache.emplace(text, backend.embed(text)).first;
    return it->second;
  };

  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    const auto& ec = embedding(c.text);
    double total = 0.0;
    for (const auto& p : previous_questions) total += 1.0 - cosine_similarity(ec, embedding(p));
    out.push_back(scored(c, total / static_cast<double>(previous_questions.size()),
                         RankingMode::kDiversity));
  }
  return order_scored(std::move(out));
}

}  // namespace pmd

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmd/backend.hpp"
#include "pmd/domain.hpp"
#include "pmd/nli_judge.hpp"

namespace pmd {

enum class RankingMode : std::uint8_t { kLikelihood, kCoherence, kDiversity };

std::string_view to_string(RankingMode mode);
RankingMode parse_ranking_mode(std::string_view s);

struct RankedCandidate {
  CandidateQuestion candidate;
  double score = 0.0;
  int rank = 1;  // 1-based
  RankingMode score_kind = RankingMode::kLikelihood;
  // Surface form check result; fallback-path candidates may fail it and are
  // kept anyway.
  bool surface_valid = true;

  bool operator==(const RankedCandidate&) const = default;
};

/// Yes/no question surface rules: leading is/are/was/were/does/do/did/has/
/// have/had (any case), no standalone "or", none of the words successful,
/// successfully, completed, procedure, and a trailing "?".
bool validate_question_surface(std::string_view text);

/// Trimmed and case-folded; used for duplicate detection.
std::string normalize_question(std::string_view text);

/// Drops candidates whose normalized text matches an asked question or an
/// earlier candidate. Order preserved.
std::vector<CandidateQuestion> dedup(std::span<const CandidateQuestion> candidates,
                                     std::span<const std::string> asked);

/// Orders scored candidates: score descending, then text ascending (then
/// the remaining fields, so the order is total).
std::vector<RankedCandidate> order_scored(std::vector<RankedCandidate> scored);

/// By log-likelihood. Throws ValidationError on empty input.
std::vector<RankedCandidate> rank_likelihood(std::span<const CandidateQuestion> candidates);

/// log p' = log p - l * log(token_count). l = 0 leaves scores unchanged.
std::vector<CandidateQuestion> apply_length_penalty(std::span<const CandidateQuestion> candidates,
                                                    double l);

struct CoherenceScore {
  double relevance = 0.0;
  double max_informativeness = 0.0;
  double score = 0.0;  // relevance * max_informativeness
};

CoherenceScore coherence_score(NliJudge& judge, std::string_view procedure,
                               std::span<const QaPair> history, std::string_view candidate);

/// Relevance times the larger of the Yes/No informativeness.
std::vector<RankedCandidate> rank_coherence(NliJudge& judge, std::string_view procedure,
                                            std::span<const QaPair> history,
                                            std::span<const CandidateQuestion> candidates);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Mean cosine distance to previous questions. Falls back to likelihood
/// ranking when there are no previous questions.
std::vector<RankedCandidate> rank_diversity(Backend& backend,
                                            std::span<const CandidateQuestion> candidates,
                                            std::span<const std::string> previous_questions);

}  // namespace pmd

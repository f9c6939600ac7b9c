#include "pmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pmd/errors.hpp"

namespace pmd {

namespace {

void require_probability(double p, std::string_view what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    std::ostringstream msg;
    msg << what << " out of [0,1]: " << p;
    throw ValidationError(msg.str());
  }
}

std::vector<QaPair> extended(std::span<const QaPair> history, QaPair turn) {
  std::vector<QaPair> out(history.begin(), history.end());
  out.push_back(std::move(turn));
  return out;
}

}  // namespace

double binary_entropy(double p) {
  require_probability(p, "probability");
  const double q = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
  const double h = -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
  // The clamp leaves ~4e-11 bits at the endpoints; report the exact limit.
  if (p == 0.0 || p == 1.0) return 0.0;
  return std::clamp(h, 0.0, 1.0);
}

double information_content(double p) { return 1.0 - binary_entropy(p); }

Label nli_belief(double success_probability) {
  return success_probability < 0.5 ? Label::kMistake : Label::kSuccess;
}

double signed_information_content(double success_probability, Label label) {
  const double inf = information_content(success_probability);
  return nli_belief(success_probability) == label ? inf : -inf;
}

double relevance(NliJudge& judge, std::string_view procedure, std::span<const QaPair> history,
                 std::string_view candidate) {
  const std::string q(candidate);
  const double p_no = judge.success_probability(procedure, extended(history, {q, AnswerValue::kNo}));
  const double p_yes =
      judge.success_probability(procedure, extended(history, {q, AnswerValue::kYes}));
  return std::abs(p_no - p_yes);
}

double informativeness(NliJudge& judge, std::string_view procedure,
                       std::span<const QaPair> history, const QaPair& turn) {
  if (turn.answer == AnswerValue::kUnsure) {
    throw ValidationError("informativeness is undefined for Unsure answers");
  }
  return information_content(judge.success_probability(procedure, extended(history, turn)));
}

double ref_adjusted_informativeness(NliJudge& judge, std::string_view procedure,
                                    std::span<const QaPair> history, const QaPair& turn,
                                    Label label) {
  if (turn.answer == AnswerValue::kUnsure) {
    throw ValidationError("informativeness is undefined for Unsure answers");
  }
  return signed_information_content(
      judge.success_probability(procedure, extended(history, turn)), label);
}

std::optional<double> example_relevance(std::span<const double> per_turn_relevances) {
  if (per_turn_relevances.empty()) return std::nullopt;
  const double sum = std::accumulate(per_turn_relevances.begin(), per_turn_relevances.end(), 0.0);
  return sum / static_cast<double>(per_turn_relevances.size());
}

std::optional<double> example_informativeness(std::span<const double> per_turn_ref_adjusted,
                                              std::span<const Answer> answers) {
  if (per_turn_ref_adjusted.size() != answers.size()) {
    throw ValidationError("example_informativeness: value/answer length mismatch");
  }
  std::optional<double> best;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i].value == AnswerValue::kUnsure) continue;
    if (!best || per_turn_ref_adjusted[i] > *best) best = per_turn_ref_adjusted[i];
  }
  return best;
}

std::optional<double> example_informativeness(
    std::span<const std::optional<double>> per_turn_ref_adjusted) {
  std::optional<double> best;
  for (const auto& v : per_turn_ref_adjusted) {
    if (v && (!best || *v > *best)) best = *v;
  }
  return best;
}

double decision_error(double final_success_likelihood, Label label) {
  require_probability(final_success_likelihood, "success likelihood");
  return label == Label::kSuccess ? 1.0 - final_success_likelihood : final_success_likelihood;
}

double information_gain(std::span<const double> success_likelihoods) {
  if (success_likelihoods.empty()) {
    throw ValidationError("information_gain needs at least one likelihood");
  }
  double sum = 0.0;
  for (double p : success_likelihoods) sum += information_content(p);
  return sum / static_cast<double>(success_likelihoods.size());
}

std::vector<TurnMetrics> score_turns(NliJudge& judge, std::string_view procedure,
                                     std::span<const DialogTurn> turns, Label label) {
  std::vector<TurnMetrics> out;
  out.reserve(turns.size());
  std::vector<QaPair> history;
  for (const auto& turn : turns) {
    TurnMetrics m;
    m.relevance = relevance(judge, procedure, history, turn.question);
    if (turn.answer.value != AnswerValue::kUnsure) {
      const QaPair qa{turn.question, turn.answer.value};
      const double p = judge.success_probability(procedure, extended(history, qa));
      m.nli_success_prob = p;
      m.informativeness = information_content(p);
      m.ref_adjusted_informativeness = signed_information_content(p, label);
      history.push_back(qa);
    }
    out.push_back(m);
  }
  return out;
}

ExampleMetrics aggregate_example(std::span<const TurnMetrics> turn_metrics,
                                 std::span<const double> success_likelihoods, Label label) {
  ExampleMetrics m;
  std::vector<double> rel;
  std::vector<std::optional<double>> inf;
  rel.reserve(turn_metrics.size());
  for (const auto& t : turn_metrics) {
    rel.push_back(t.relevance);
    inf.push_back(t.ref_adjusted_informativeness);
  }
  m.example_relevance = example_relevance(rel);
  m.example_informativeness = example_informativeness(std::span<const std::optional<double>>(inf));
  m.iterations = static_cast<int>(turn_metrics.size());
  if (!success_likelihoods.empty()) {
    m.decision_error = decision_error(success_likelihoods.back(), label);
    m.information_gain = information_gain(success_likelihoods);
  }
  return m;
}

}  // namespace pmd

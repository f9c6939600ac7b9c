#include "pmd/domain.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <utility>

#include "pmd/errors.hpp"

namespace pmd {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw ValidationError("unknown " + std::string(what) + ": '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, Label>, 2> kLabels{{
    {"success", Label::kSuccess},
    {"mistake", Label::kMistake},
}};

constexpr std::array<std::pair<std::string_view, MistakeType>, 5> kMistakeTypes{{
    {"none", MistakeType::kNone},
    {"incomplete", MistakeType::kIncomplete},
    {"wrong_verb", MistakeType::kWrongVerb},
    {"wrong_noun", MistakeType::kWrongNoun},
    {"wrong_verb_noun", MistakeType::kWrongVerbNoun},
}};

constexpr std::array<std::pair<std::string_view, Split>, 3> kSplits{{
    {"train", Split::kTrain},
    {"val", Split::kVal},
    {"test", Split::kTest},
}};

constexpr std::array<std::pair<std::string_view, AnswerValue>, 3> kAnswers{{
    {"Yes", AnswerValue::kYes},
    {"No", AnswerValue::kNo},
    {"Unsure", AnswerValue::kUnsure},
}};

constexpr std::array<std::pair<std::string_view, StopReason>, 4> kStopReasons{{
    {"stabilized", StopReason::kStabilized},
    {"confident", StopReason::kConfident},
    {"max_iterations", StopReason::kMaxIterations},
    {"rationale_free", StopReason::kRationaleFree},
}};

constexpr std::array<std::pair<std::string_view, CandidateSource>, 2> kSources{{
    {"dialog_context", CandidateSource::kDialogContext},
    {"icl", CandidateSource::kIcl},
}};

}  // namespace

Answer classify_answer(double yes_probability) {
  if (!(yes_probability >= 0.0 && yes_probability <= 1.0)) {
    std::ostringstream msg;
    msg << "yes probability out of [0,1]: " << yes_probability;
    throw ValidationError(msg.str());
  }
  Answer a;
  a.yes_probability = yes_probability;
  if (yes_probability >= kSurenessThreshold) {
    a.value = AnswerValue::kYes;
  } else if (1.0 - yes_probability >= kSurenessThreshold) {
    a.value = AnswerValue::kNo;
  } else {
    a.value = AnswerValue::kUnsure;
  }
  return a;
}

std::vector<QaPair> filtered_history(std::span<const DialogTurn> turns) {
  std::vector<QaPair> out;
  out.reserve(turns.size());
  for (const auto& t : turns) {
    if (t.answer.value == AnswerValue::kUnsure) continue;
    out.push_back({t.question, t.answer.value});
  }
  return out;
}

std::vector<QaPair> filtered_history(const DialogState& state) {
  return filtered_history(std::span<const DialogTurn>(state.turns));
}

int whitespace_token_count(std::string_view text) {
  std::istringstream in{std::string(text)};
  int n = 0;
  std::string tok;
  while (in >> tok) ++n;
  return n < 1 ? 1 : n;
}

std::string_view to_string(Label v) { return enum_name(v, kLabels); }
std::string_view to_string(MistakeType v) { return enum_name(v, kMistakeTypes); }
std::string_view to_string(Split v) { return enum_name(v, kSplits); }
std::string_view to_string(AnswerValue v) { return enum_name(v, kAnswers); }
std::string_view to_string(StopReason v) { return enum_name(v, kStopReasons); }
std::string_view to_string(CandidateSource v) { return enum_name(v, kSources); }

Label parse_label(std::string_view s) { return parse_enum(s, kLabels, "label"); }
MistakeType parse_mistake_type(std::string_view s) {
  return parse_enum(s, kMistakeTypes, "mistake_type");
}
Split parse_split(std::string_view s) { return parse_enum(s, kSplits, "split"); }
AnswerValue parse_answer_value(std::string_view s) { return parse_enum(s, kAnswers, "answer"); }
StopReason parse_stop_reason(std::string_view s) {
  return parse_enum(s, kStopReasons, "stop_reason");
}
CandidateSource parse_candidate_source(std::string_view s) {
  return parse_enum(s, kSources, "candidate source");
}

}  // namespace pmd

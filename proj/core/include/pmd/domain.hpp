#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pmd {

enum class Label : std::uint8_t { kSuccess = 0, kMistake = 1 };

enum class MistakeType : std::uint8_t {
  kNone,
  kIncomplete,
  kWrongVerb,
  kWrongNoun,
  kWrongVerbNoun,
};

enum class Split : std::uint8_t { kTrain, kVal, kTest };

/// One procedural mistake detection instance.
struct Example {
  std::string id;
  std::string procedure_text;
  std::string frame_ref;  // opaque; handed to backends untouched
  Label label = Label::kSuccess;
  MistakeType mistake_type = MistakeType::kNone;
  Split split = Split::kTest;

  bool operator==(const Example&) const = default;
};

enum class AnswerValue : std::uint8_t { kYes, kNo, kUnsure };

struct Answer {
  AnswerValue value = AnswerValue::kUnsure;
  double yes_probability = 0.5;

  bool operator==(const Answer&) const = default;
};

/// Minimum probability mass on the chosen answer for it to count as sure.
inline constexpr double kSurenessThreshold = 0.6;

/// Yes on [0.6, 1], No on [0, 0.4], Unsure in between. Throws
/// ValidationError outside [0, 1] or on NaN.
Answer classify_answer(double yes_probability);

struct DialogTurn {
  std::string question;
  Answer answer;
  int iteration_index = 1;

  bool operator==(const DialogTurn&) const = default;
};

enum class StopReason : std::uint8_t {
  kStabilized,
  kConfident,
  kMaxIterations,
  kRationaleFree,
};

struct DialogState {
  std::string example_id;
  std::vector<DialogTurn> turns;
  std::vector<double> success_likelihoods;  // one per completed iteration
  StopReason stop_reason = StopReason::kMaxIterations;
  Label decision = Label::kSuccess;
  double mistake_likelihood_final = 0.5;

  bool operator==(const DialogState&) const = default;
};

enum class CandidateSource : std::uint8_t { kDialogContext, kIcl };

struct CandidateQuestion {
  std::string text;
  double log_likelihood = 0.0;
  CandidateSource source = CandidateSource::kDialogContext;
  int token_count = 1;
  // Produced by the backend's unconstrained fallback decode; may not be a
  // well-formed yes/no question.
  bool unconstrained = false;

  bool operator==(const CandidateQuestion&) const = default;
};

/// A confidently answered question. `answer` is never kUnsure.
struct QaPair {
  std::string question;
  AnswerValue answer = AnswerValue::kYes;

  bool operator==(const QaPair&) const = default;
};

/// Turns answered Yes or No, in dialog order. Unsure turns never reach the
/// metric or NLI computations.
std::vector<QaPair> filtered_history(std::span<const DialogTurn> turns);
std::vector<QaPair> filtered_history(const DialogState& state);

/// Number of whitespace-separated tokens, at least 1.
int whitespace_token_count(std::string_view text);

std::string_view to_string(Label v);
std::string_view to_string(MistakeType v);
std::string_view to_string(Split v);
std::string_view to_string(AnswerValue v);
std::string_view to_string(StopReason v);
std::string_view to_string(CandidateSource v);

// Parsers throw ValidationError on unknown names.
Label parse_label(std::string_view s);
MistakeType parse_mistake_type(std::string_view s);
Split parse_split(std::string_view s);
AnswerValue parse_answer_value(std::string_view s);
StopReason parse_stop_reason(std::string_view s);
CandidateSource parse_candidate_source(std::string_view s);

}  // namespace pmd

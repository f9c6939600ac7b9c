#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmd/domain.hpp"
#include "pmd/util.hpp"

namespace pmd {

struct IclEntry {
  std::string procedure;
  std::array<std::string, 3> questions;

  bool operator==(const IclEntry&) const = default;
};

/// Human-written example questions for question generation.
struct IclBank {
  static constexpr std::size_t kSize = 20;
  std::vector<IclEntry> entries;

  bool operator==(const IclBank&) const = default;
};

/// The bundled 20-procedure bank (also shipped as data/icl_bank.json).
const IclBank& default_icl_bank();

/// Reads {"entries": [{"procedure": ..., "questions": [q1, q2, q3]}, ...]}.
/// Throws ValidationError unless there are exactly 20 entries of 3 questions.
IclBank load_icl_bank(const std::string& path);
std::string icl_bank_to_json(const IclBank& bank);

struct RephraseDemo {
  std::string_view question;
  AnswerValue answer;
  std::string_view statement;
};

/// The ten question/answer -> statement demonstrations used for rephrasing.
std::span<const RephraseDemo> rephrase_demonstrations();

/// Few-shot rephrasing prompt ending in "Statement:".
std::string build_rephrase_prompt(std::string_view question, AnswerValue answer);

/// Opening paragraph shared by question generation and success
/// classification in dialog mode.
std::string vqg_preamble(std::string_view procedure);

/// Question generation prompt: preamble, then the raw history (Unsure turns
/// included) as "Q: ..."/"A: ..." lines, ending with "Q:". `gpt_compat`
/// appends the explicit yes/no instruction to the preamble.
std::string build_vqg_prompt(std::string_view procedure, std::span<const DialogTurn> raw_history,
                             bool gpt_compat = false);

/// In-context prompt: the bank in a shuffled order drawn from `rng`, the
/// current procedure, and up to the two most recent asked questions.
std::string build_icl_prompt(std::string_view procedure, const IclBank& bank,
                             std::span<const std::string> recent_questions, Rng& rng);

/// Success classification prompt. Dialog mode prefixes the preamble and raw
/// history; rationale-free mode uses the single-turn template.
std::string build_success_prompt(std::string_view procedure,
                                 std::span<const DialogTurn> raw_history,
                                 bool rationale_free = false);

/// Visual question answering prompt sent with the frame.
std::string build_vqa_prompt(std::string_view question, bool gpt_compat = false);

}  // namespace pmd

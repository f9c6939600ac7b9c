#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmd/domain.hpp"
#include "pmd/orchestrator.hpp"
#include "pmd/util.hpp"

namespace pmd {

// Dataset JSONL, one object per line:
//   {"id", "procedure_text", "frame_ref", "label": "success"|"mistake",
//    "mistake_type", "split"}
// mistake_type defaults to "none" for successes and is required for
// mistakes; split defaults to "test". Blank lines are ignored.

/// Parses one dataset line. Throws ValidationError naming the offending field.
Example parse_example(std::string_view line);

/// Compact single-line JSON with a fixed key order.
std::string example_to_json(const Example& example);

struct DatasetManifest {
  std::string path;
  std::array<std::size_t, 3> split_counts{};         // indexed by Split
  std::array<std::size_t, 5> mistake_type_counts{};  // indexed by MistakeType
  std::string checksum;                              // SHA-256 of the file bytes

  std::size_t count(Split s) const { return split_counts[static_cast<std::size_t>(s)]; }
  std::size_t count(MistakeType t) const {
    return mistake_type_counts[static_cast<std::size_t>(t)];
  }
  std::size_t total() const;
};

struct DatasetError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct Dataset {
  std::vector<Example> examples;
  DatasetManifest manifest;
  std::vector<DatasetError> errors;  // empty unless loaded leniently

  bool ok() const { return errors.empty(); }
};

/// Loads and validates a dataset file. Lenient mode collects every bad line
/// and keeps the good ones; strict mode throws ValidationError at the first
/// bad line. A missing file always throws.
Dataset load_dataset(const std::filesystem::path& path, bool strict = false);

/// Same rules over in-memory text; `origin` only labels the manifest.
Dataset parse_dataset(std::string_view text, bool strict = false, std::string origin = {});

std::string dataset_to_jsonl(std::span<const Example> examples);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

/// Human-readable report: one "line N: message" row per error.
std::string format_errors(std::span<const DatasetError> errors);

struct PreferencePair {
  std::string prompt;  // the VQG prompt of that turn
  std::string chosen;
  std::string rejected;
  std::string example_id;
  int iteration_index = 1;
  RankingMode ranking_mode = RankingMode::kLikelihood;

  bool operator==(const PreferencePair&) const = default;
};

/// One pair from a ranked turn, or nothing when the turn has a single
/// candidate or its chosen question was answered Unsure. The rejected
/// question is drawn uniformly from ranks ceil(m/2)+1 .. m.
std::optional<PreferencePair> preference_pair_for_turn(const TurnRecord& record,
                                                       const Answer& chosen_answer,
                                                       std::string_view example_id,
                                                       RankingMode mode, Rng& rng);

/// Pairs for every turn of every status-ok result, in result then turn
/// order. Each example draws from its own stream seeded by (seed, id).
std::vector<PreferencePair> export_dpo_pairs(std::span<const ExampleResult> results,
                                             std::uint64_t seed);

std::string preference_pair_to_json(const PreferencePair& pair);
std::string dpo_pairs_to_jsonl(std::span<const PreferencePair> pairs);

}  // namespace pmd

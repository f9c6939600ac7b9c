#include "pmd/dataset_io.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "pmd/errors.hpp"

namespace pmd {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string required_string(const json& obj, const char* field) {
  if (!obj.contains(field)) throw ValidationError(std::string("missing field '") + field + "'");
  const json& v = obj.at(field);
  if (!v.is_string()) throw ValidationError(std::string("field '") + field + "' must be a string");
  std::string s = v.get<std::string>();
  if (trim(s).empty()) throw ValidationError(std::string("field '") + field + "' is empty");
  return s;
}

std::optional<std::string> optional_string(const json& obj, const char* field) {
  if (!obj.contains(field) || obj.at(field).is_null()) return std::nullopt;
  if (!obj.at(field).is_string()) {
    throw ValidationError(std::string("field '") + field + "' must be a string");
  }
  return obj.at(field).get<std::string>();
}

}  // namespace

Example parse_example(std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ValidationError("line is not a JSON object");

  Example ex;
  ex.id = required_string(obj, "id");
  ex.procedure_text = required_string(obj, "procedure_text");
  ex.frame_ref = required_string(obj, "frame_ref");
  ex.label = parse_label(required_string(obj, "label"));
  if (auto mt = optional_string(obj, "mistake_type")) {
    ex.mistake_type = parse_mistake_type(*mt);
  } else if (ex.label == Label::kMistake) {
    throw ValidationError("label 'mistake' requires a mistake_type");
  }
  if (auto split = optional_string(obj, "split")) ex.split = parse_split(*split);

  if (ex.label == Label::kSuccess && ex.mistake_type != MistakeType::kNone) {
    throw ValidationError("label 'success' with mistake_type '" +
                          std::string(to_string(ex.mistake_type)) + "'");
  }
  if (ex.label == Label::kMistake && ex.mistake_type == MistakeType::kNone) {
    throw ValidationError("label 'mistake' with mistake_type 'none'");
  }
  return ex;
}

std::string example_to_json(const Example& example) {
  ordered_json j;
  j["id"] = example.id;
  j["procedure_text"] = example.procedure_text;
  j["frame_ref"] = example.frame_ref;
  j["label"] = to_string(example.label);
  j["mistake_type"] = to_string(example.mistake_type);
  j["split"] = to_string(example.split);
  return j.dump();
}

std::size_t DatasetManifest::total() const {
  return std::accumulate(split_counts.begin(), split_counts.end(), std::size_t{0});
}

Dataset parse_dataset(std::string_view text, bool strict, std::string origin) {
  Dataset ds;
  ds.manifest.path = std::move(origin);
  ds.manifest.checksum = sha256_hex(text);
  std::unordered_map<std::string, std::size_t> first_line;

  auto fail = [&](std::size_t line_no, std::string message) {
    if (strict) throw ValidationError("line " + std::to_string(line_no) + ": " + message);
    ds.errors.push_back({line_no, std::move(message)});
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    Example ex;
    try {
      ex = parse_example(line);
    } catch (const ValidationError& e) {
      fail(line_no, e.what());
      continue;
    }
    const auto [it, inserted] = first_line.emplace(ex.id, line_no);
    if (!inserted) {
      fail(line_no, "duplicate id '" + ex.id + "' (lines " + std::to_string(it->second) + " and " +
                        std::to_string(line_no) + ")");
      continue;
    }
    ds.manifest.split_counts[static_cast<std::size_t>(ex.split)] += 1;
    ds.manifest.mistake_type_counts[static_cast<std::size_t>(ex.mistake_type)] += 1;
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw ValidationError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path, bool strict) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ValidationError("dataset file not found: " + path.string());
  }
  return parse_dataset(read_text_file(path), strict, path.string());
}

std::string dataset_to_jsonl(std::span<const Example> examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += example_to_json(ex);
    out.push_back('\n');
  }
  return out;
}

std::string format_errors(std::span<const DatasetError> errors) {
  std::string out;
  for (const auto& e : errors) {
    out += "line " + std::to_string(e.line) + ": " + e.message + "\n";
  }
  return out;
}

std::optional<PreferencePair> preference_pair_for_turn(const TurnRecord& record,
                                                       const Answer& chosen_answer,
                                                       std::string_view example_id,
                                                       RankingMode mode, Rng& rng) {
  const std::size_t m = record.ranked.size();
  if (m < 2 || chosen_answer.value == AnswerValue::kUnsure) return std::nullopt;
  // Bottom half: ranks ceil(m/2)+1 .. m, i.e. zero-based [ceil(m/2), m).
  const std::size_t first = (m + 1) / 2;
  const std::size_t pick = first + static_cast<std::size_t>(uniform_index(rng, m - first));

  PreferencePair pair;
  pair.prompt = record.vqg_prompt;
  pair.chosen = record.ranked.front().candidate.text;
  pair.rejected = record.ranked[pick].candidate.text;
  if (pair.chosen == pair.rejected) return std::nullopt;
  pair.example_id = std::string(example_id);
  pair.iteration_index = record.iteration_index;
  pair.ranking_mode = mode;
  return pair;
}

std::vector<PreferencePair> export_dpo_pairs(std::span<const ExampleResult> results,
                                             std::uint64_t seed) {
  std::vector<PreferencePair> out;
  for (const auto& r : results) {
    if (r.status != ExampleStatus::kOk) continue;
    Rng rng(example_seed(seed, r.id));
    for (const auto& record : r.turn_records) {
      const auto idx = static_cast<std::size_t>(record.iteration_index - 1);
      if (idx >= r.state.turns.size()) continue;
      if (auto pair =
              preference_pair_for_turn(record, r.state.turns[idx].answer, r.id, r.ranking_mode, rng)) {
        out.push_back(std::move(*pair));
      }
    }
  }
  return out;
}

std::string preference_pair_to_json(const PreferencePair& pair) {
  ordered_json j;
  j["prompt"] = pair.prompt;
  j["chosen"] = pair.chosen;
  j["rejected"] = pair.rejected;
  j["example_id"] = pair.example_id;
  j["iteration_index"] = pair.iteration_index;
  j["ranking_mode"] = to_string(pair.ranking_mode);
  return j.dump();
}

std::string dpo_pairs_to_jsonl(std::span<const PreferencePair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += preference_pair_to_json(p);
    out.push_back('\n');
  }
  return out;
}

}  // namespace pmd

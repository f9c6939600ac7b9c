#include "pmd/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "pmd/dataset_io.hpp"
#include "pmd/errors.hpp"
#include "pmd/orchestrator.hpp"
#include "pmd/scripted_backend.hpp"
#include "pmd/util.hpp"

namespace pmd {

namespace {

constexpr std::array<const char*, 24> kProcedures = {
    "Crack the eggs into the bowl.",
    "Put the lid on the pot.",
    "Pour the milk into the glass.",
    "Slice the bread on the cutting board.",
    "Place the plate in the sink.",
    "Fold the towel on the counter.",
    "Add salt to the pan.",
    "Peel the banana.",
    "Wash the apple under the tap.",
    "Close the fridge door.",
    "Spread butter on the toast.",
    "Stir the soup with the spoon.",
    "Fill the kettle with water.",
    "Put the cup on the saucer.",
    "Cut the tomato in half.",
    "Open the jar of jam.",
    "Wipe the table with the cloth.",
    "Put the knife in the drawer.",
    "Grate the cheese over the pasta.",
    "Pour the batter into the tray.",
    "Tie the bag of rubbish.",
    "Place the lemon on the scale.",
    "Screw the cap onto the bottle.",
    "Hang the apron on the hook.",
};

constexpr std::array<std::string_view, 26> kStopWords = {
    "the", "a",   "an",   "into", "onto", "on",   "in",  "of",   "to",
    "with", "and", "from", "for", "your", "it",   "up",  "out",  "off",
    "over", "at",  "by",   "under", "half", "some", "its", "their"};

constexpr std::array<const char*, 8> kTemplates = {
    "Is the %s visible?",
    "Is the %s in the person's hand?",
    "Has the %s been moved?",
    "Is there a %s on the counter?",
    "Does the %s look different?",
    "Is the %s open?",
    "Are the person's hands near the %s?",
    "Is the %s still in its original place?",
};

constexpr std::array<const char*, 3> kMalformed = {
    "Is the %s open or closed?",
    "Was the %s handled successfully?",
    "Where is the %s?",
};

constexpr std::array<std::string_view, 11> kAuxiliaries = {
    "is", "are", "was", "were", "has", "have", "had", "does", "do", "did", "can"};

constexpr std::array<std::string_view, 10> kDeterminers = {
    "the", "a", "an", "this", "that", "these", "those", "any", "some", "there"};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<std::string> lower_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalpha(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string fill(const char* pattern, const std::string& word) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, word.c_str());
  return buf;
}

std::string extract_procedure(const std::string& prompt) {
  const std::string quoted = "procedure \"";
  if (auto at = prompt.find(quoted); at != std::string::npos) {
    const auto start = at + quoted.size();
    const auto end = prompt.find('"', start);
    if (end != std::string::npos) return prompt.substr(start, end - start);
  }
  const std::string marker = "Procedure: ";
  if (auto at = prompt.rfind(marker); at != std::string::npos) {
    const auto start = at + marker.size();
    return prompt.substr(start, prompt.find('\n', start) - start);
  }
  return {};
}

std::vector<std::string> content_nouns(const std::string& procedure) {
  auto ws = lower_words(procedure);
  std::vector<std::string> out;
  for (std::size_t i = 1; i < ws.size(); ++i) {  // the first word is the verb
    const auto& w = ws[i];
    if (w.size() < 3) continue;
    if (std::find(kStopWords.begin(), kStopWords.end(), w) != kStopWords.end()) continue;
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  }
  if (out.empty()) out = {"object", "hands"};
  return out;
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto at = text.find(needle); at != std::string_view::npos;
       at = text.find(needle, at + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

void SynthConfig::validate() const {
  if (count < 1) throw ValidationError("synthetic count must be >= 1");
  if (mistakes < 0 || mistakes > count) {
    throw ValidationError("synthetic balance: mistakes (" + std::to_string(mistakes) +
                          ") must lie in [0, count=" + std::to_string(count) + "]");
  }
  if (content_filtered < 0 || content_filtered > count) {
    throw ValidationError("content_filtered must lie in [0, count]");
  }
  if (embed_dim < 2) throw ValidationError("embed_dim must be >= 2");
  if (!(rephrase_no_content_rate >= 0.0 && rephrase_no_content_rate <= 1.0)) {
    throw ValidationError("rephrase_no_content_rate must lie in [0,1]");
  }
  if (!(malformed_candidate_rate >= 0.0 && malformed_candidate_rate <= 1.0)) {
    throw ValidationError("malformed_candidate_rate must lie in [0,1]");
  }
  if (!std::isfinite(signal)) throw ValidationError("signal must be finite");
}

SyntheticBackend::SyntheticBackend(SynthConfig config, const std::vector<Example>& examples)
    : config_(config) {
  config_.validate();
  for (const auto& ex : examples) by_frame_.emplace(ex.frame_ref, ex);
}

double SyntheticBackend::unit(std::string_view salt, std::string_view text) const {
  std::string material(salt);
  material.push_back('\x1f');
  material.append(text);
  return static_cast<double>(example_seed(config_.seed, material) >> 11) * 0x1.0p-53;
}

const Example& SyntheticBackend::example_for(const std::string& frame_ref) const {
  auto it = by_frame_.find(frame_ref);
  if (it == by_frame_.end()) throw BackendUnavailable("unknown frame_ref: " + frame_ref);
  return it->second;
}

CandidateBatch SyntheticBackend::generate_candidates(const std::string& prompt,
                                                     int max_candidates) {
  if (max_candidates < 1) throw ValidationError("max_candidates must be >= 1");
  const auto nouns = content_nouns(extract_procedure(prompt));

  std::set<std::string> pool;
  for (const auto& n : nouns) {
    for (const char* t : kTemplates) pool.insert(fill(t, n));
  }
  // A model rarely repeats a question already in its context.
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& q : pool) {
    if (prompt.find(q) != std::string::npos) continue;
    scored.emplace_back(unit("vqg", prompt + '\x1f' + q), q);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (scored.size() > static_cast<std::size_t>(max_candidates)) {
    scored.resize(static_cast<std::size_t>(max_candidates));
  }

  CandidateBatch batch;
  for (auto& [u, q] : scored) {
    CandidateQuestion c;
    c.text = q;
    const double m = unit("malformed", prompt + '\x1f' + q);
    if (m < config_.malformed_candidate_rate) {
      const auto& noun = nouns[static_cast<std::size_t>(m * 1e6) % nouns.size()];
      c.text = fill(kMalformed[static_cast<std::size_t>(u * 1e6) % kMalformed.size()], noun);
    }
    c.log_likelihood = -(0.2 + 4.0 * (1.0 - u));
    c.token_count = whitespace_token_count(c.text);
    batch.candidates.push_back(std::move(c));
  }
  return batch;
}

double SyntheticBackend::answer_yes_probability(const std::string& question,
                                                const std::string& frame_ref) {
  const Example& ex = example_for(frame_ref);
  const double s = ex.label == Label::kSuccess ? 1.0 : -1.0;
  const double strength = unit("vqa-strength", frame_ref + '\x1f' + question);
  const double noise = unit("vqa-noise", frame_ref + '\x1f' + question);
  return sigmoid(config_.signal * s * (0.5 + 1.5 * strength) + 2.0 * (noise - 0.5));
}

double SyntheticBackend::success_yes_probability(const std::string& prompt,
                                                 const std::string& frame_ref) {
  const Example& ex = example_for(frame_ref);
  if (config_.content_filtered > 0) {
    // The examples with the lowest filter draw are refused.
    std::vector<std::pair<double, std::string>> draws;
    for (const auto& [frame, e] : by_frame_) draws.emplace_back(unit("filter", e.id), e.id);
    std::sort(draws.begin(), draws.end());
    for (int i = 0; i < config_.content_filtered; ++i) {
      if (draws[static_cast<std::size_t>(i)].second == ex.id) {
        throw ContentFiltered("synthetic content filter: " + ex.id);
      }
    }
  }
  const double s = ex.label == Label::kSuccess ? 1.0 : -1.0;
  const auto yes = static_cast<double>(count_occurrences(prompt, "\nA: Yes"));
  const auto no = static_cast<double>(count_occurrences(prompt, "\nA: No"));
  const double noise = unit("success", frame_ref + '\x1f' + prompt);
  return sigmoid(config_.signal * s * (0.2 + 0.35 * (yes + no)) + 1.6 * (noise - 0.5) +
                 0.15 * (yes - no));
}

std::string SyntheticBackend::rephrase(const std::string& question, AnswerValue answer) {
  if (answer == AnswerValue::kUnsure) throw ValidationError("Unsure answers are never rephrased");
  if (unit("rephrase", question + '\x1f' + std::string(to_string(answer))) <
      config_.rephrase_no_content_rate) {
    return {};
  }
  return template_statement(question, answer);
}

double SyntheticBackend::entail(const std::string& premise, const std::string& hypothesis) {
  if (hypothesis.empty()) throw ValidationError("empty hypothesis");
  if (trim(premise).empty()) return 0.5;
  double logit = 0.8 * (unit("nli-bias", hypothesis) - 0.5);
  std::size_t start = 0;
  while (start < premise.size()) {
    std::size_t end = premise.find(". ", start);
    if (end == std::string::npos) end = premise.size();
    const std::string sentence = trim(premise.substr(start, end - start));
    start = end + 2;
    if (sentence.empty()) continue;
    const auto ws = lower_words(sentence);
    const bool negated = std::find(ws.begin(), ws.end(), "not") != ws.end() ||
                         (!ws.empty() && ws.back() == "no");
    const double weight = 0.3 + 1.2 * unit("nli", sentence + '\x1f' + hypothesis);
    logit += negated ? -weight : weight;
  }
  return sigmoid(logit);
}

std::vector<double> SyntheticBackend::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("empty text");
  std::vector<double> v(static_cast<std::size_t>(config_.embed_dim), 0.0);
  for (const auto& w : lower_words(text)) {
    const std::uint64_t h = fnv1a64(w);
    v[h % v.size()] += ((h >> 32) & 1U) != 0 ? 1.0 : -1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    v[0] = 1.0;
    return v;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::string template_statement(std::string_view question, AnswerValue answer) {
  std::string q = trim(question);
  while (!q.empty() && (q.back() == '?' || q.back() == ' ')) q.pop_back();
  std::vector<std::string> ws;
  for (std::size_t i = 0; i < q.size();) {
    const auto end = std::min(q.find(' ', i), q.size());
    if (end > i) ws.push_back(q.substr(i, end - i));
    i = end + 1;
  }
  if (ws.size() < 2) return {};
  const std::string aux = to_lower(ws[0]);
  if (std::find(kAuxiliaries.begin(), kAuxiliaries.end(), aux) == kAuxiliaries.end()) return {};

  // Subject: a bare word, or a determiner phrase extended over possessives.
  std::size_t subject_end = 2;
  const std::string first = to_lower(ws[1]);
  if (first != "there" &&
      std::find(kDeterminers.begin(), kDeterminers.end(), first) != kDeterminers.end() &&
      ws.size() > 2) {
    subject_end = 3;
    while (subject_end < ws.size() && ws[subject_end - 1].ends_with("'s")) ++subject_end;
  }

  std::string out;
  for (std::size_t i = 1; i < subject_end; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += ws[i];
  }
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  out += ' ' + aux;
  if (answer == AnswerValue::kNo) out += " not";
  for (std::size_t i = subject_end; i < ws.size(); ++i) out += ' ' + ws[i];
  out.push_back('.');
  return out;
}

std::vector<Example> synthetic_examples(const SynthConfig& config) {
  config.validate();
  std::vector<std::size_t> order(static_cast<std::size_t>(config.count));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(example_seed(config.seed, "synthetic-labels"));
  portable_shuffle(std::span<std::size_t>(order), rng);
  std::vector<bool> is_mistake(order.size(), false);
  for (int i = 0; i < config.mistakes; ++i) is_mistake[order[static_cast<std::size_t>(i)]] = true;

  constexpr std::array<MistakeType, 4> kTypes = {MistakeType::kIncomplete, MistakeType::kWrongVerb,
                                                 MistakeType::kWrongNoun,
                                                 MistakeType::kWrongVerbNoun};
  std::vector<Example> out;
  std::size_t mistake_index = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%03zu", i);
    Example ex;
    ex.id = id;
    ex.procedure_text = kProcedures[i % kProcedures.size()];
    ex.frame_ref = "frames/" + ex.id + ".jpg";
    ex.split = i % 2 == 0 ? Split::kVal : Split::kTest;
    if (is_mistake[i]) {
      ex.label = Label::kMistake;
      ex.mistake_type = kTypes[mistake_index++ % kTypes.size()];
    }
    out.push_back(std::move(ex));
  }
  return out;
}

SynthOutput generate_synthetic_fixture(const SynthConfig& config) {
  SynthOutput out;
  out.examples = synthetic_examples(config);
  out.dataset_jsonl = dataset_to_jsonl(out.examples);

  SyntheticBackend synth(config, out.examples);
  FixtureHeader header;
  header.embed_dim = config.embed_dim;
  header.entail_prior = 0.5;
  header.run_seed = config.seed;
  FixtureBuilder builder(header);
  RecordingBackend recorder(synth, builder);

  for (RankingMode mode : {RankingMode::kLikelihood, RankingMode::kCoherence,
                           RankingMode::kDiversity}) {
    for (bool icl : {false, true}) {
      RunConfig rc;
      rc.ranking_mode = mode;
      rc.icl_enabled = icl;
      rc.seed = config.seed;
      rc.disable_early_stop = true;
      DialogEngine engine(recorder, rc);
      evaluate(out.examples, engine, 1);
    }
  }
  RunConfig rf;
  rf.rationale_free = true;
  rf.seed = config.seed;
  DialogEngine baseline(recorder, rf);
  evaluate(out.examples, baseline, 1);

  out.fixture_json = builder.dump();
  return out;
}

}  // namespace pmd

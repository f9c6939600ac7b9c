#include "pmd/scripted_backend.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pmd/errors.hpp"
#include "pmd/util.hpp"

namespace pmd {

using nlohmann::json;

namespace {

std::string make_key(RequestKind kind, const json& payload) {
  std::string material(to_string(kind));
  material.push_back('\n');
  material += payload.dump();
  return sha256_hex(material);
}

json vqg_payload(std::string_view prompt) { return {{"prompt", prompt}}; }
json vqa_payload(std::string_view q, std::string_view f) {
  return {{"question", q}, {"frame_ref", f}};
}
json success_payload(std::string_view p, std::string_view f) {
  return {{"prompt", p}, {"frame_ref", f}};
}
json rephrase_payload(std::string_view q, AnswerValue a) {
  if (a == AnswerValue::kUnsure) throw ValidationError("Unsure answers are never rephrased");
  return {{"question", q}, {"answer", to_string(a)}};
}
json entail_payload(std::string_view p, std::string_view h) {
  return {{"premise", p}, {"hypothesis", h}};
}
json embed_payload(std::string_view t) { return {{"text", t}}; }

json candidate_to_json(const CandidateQuestion& c) {
  json j{{"text", c.text}, {"log_likelihood", c.log_likelihood}, {"token_count", c.token_count}};
  if (c.unconstrained) j["unconstrained"] = true;
  return j;
}

double checked_probability(const json& v, std::string_view what) {
  const double p = v.get<double>();
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError("fixture " + std::string(what) + " out of [0,1]");
  }
  return p;
}

TokenProbPair logprob_pair(const json& r) {
  TokenProbPair pair;
  if (r.contains("yes_logprob") && !r["yes_logprob"].is_null()) {
    pair.yes_logprob = r["yes_logprob"].get<double>();
  }
  if (r.contains("no_logprob") && !r["no_logprob"].is_null()) {
    pair.no_logprob = r["no_logprob"].get<double>();
  }
  return pair;
}

}  // namespace

std::string vqg_key(std::string_view prompt) { return make_key(RequestKind::kVqg, vqg_payload(prompt)); }
std::string vqa_key(std::string_view question, std::string_view frame_ref) {
  return make_key(RequestKind::kVqa, vqa_payload(question, frame_ref));
}
std::string success_key(std::string_view prompt, std::string_view frame_ref) {
  return make_key(RequestKind::kSuccessClassify, success_payload(prompt, frame_ref));
}
std::string rephrase_key(std::string_view question, AnswerValue answer) {
  return make_key(RequestKind::kRephrase, rephrase_payload(question, answer));
}
std::string entail_key(std::string_view premise, std::string_view hypothesis) {
  return make_key(RequestKind::kEntail, entail_payload(premise, hypothesis));
}
std::string embed_key(std::string_view text) {
  return make_key(RequestKind::kEmbed, embed_payload(text));
}

std::vector<double> hashed_embedding(std::string_view text, int dim) {
  if (dim < 1) throw ValidationError("embedding dimension must be positive");
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (int i = 0; i < dim; ++i) {
    const std::string digest = sha256_hex(std::string(text) + "#" + std::to_string(i));
    const auto bits = std::stoull(digest.substr(0, 12), nullptr, 16);
    const double x = static_cast<double>(bits) / static_cast<double>(0xFFFFFFFFFFFFULL) - 0.5;
    v[static_cast<std::size_t>(i)] = x;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& x : v) x /= norm;
  }
  return v;
}

// ---------------------------------------------------------------------------
// FixtureBuilder

struct FixtureBuilder::Impl {
  FixtureHeader header;
  json entries = json::object();

  void put(RequestKind kind, const json& payload, json response) {
    entries[make_key(kind, payload)] = {
        {"kind", to_string(kind)}, {"request", payload}, {"response", std::move(response)}};
  }
};

FixtureBuilder::FixtureBuilder(FixtureHeader header) : impl_(std::make_unique<Impl>()) {
  impl_->header = header;
}
FixtureBuilder::~FixtureBuilder() = default;
FixtureBuilder::FixtureBuilder(FixtureBuilder&&) noexcept = default;
FixtureBuilder& FixtureBuilder::operator=(FixtureBuilder&&) noexcept = default;

FixtureHeader& FixtureBuilder::header() { return impl_->header; }
std::size_t FixtureBuilder::size() const { return impl_->entries.size(); }

void FixtureBuilder::add_candidates(const std::string& prompt,
                                    const std::vector<CandidateQuestion>& candidates) {
  json list = json::array();
  for (const auto& c : candidates) list.push_back(candidate_to_json(c));
  impl_->put(RequestKind::kVqg, vqg_payload(prompt), {{"candidates", std::move(list)}});
}

void FixtureBuilder::add_vqg_no_content(const std::string& prompt) {
  impl_->put(RequestKind::kVqg, vqg_payload(prompt),
             {{"candidates", json::array()}, {"no_content", true}});
}

void FixtureBuilder::add_vqa(const std::string& question, const std::string& frame_ref,
                             double yes_probability) {
  impl_->put(RequestKind::kVqa, vqa_payload(question, frame_ref),
             {{"yes_probability", yes_probability}});
}

void FixtureBuilder::add_vqa_logprobs(const std::string& question, const std::string& frame_ref,
                                      const TokenProbPair& pair) {
  json r = json::object();
  r["yes_logprob"] = pair.yes_logprob ? json(*pair.yes_logprob) : json(nullptr);
  r["no_logprob"] = pair.no_logprob ? json(*pair.no_logprob) : json(nullptr);
  impl_->put(RequestKind::kVqa, vqa_payload(question, frame_ref), std::move(r));
}

void FixtureBuilder::add_success(const std::string& prompt, const std::string& frame_ref,
                                 double yes_probability) {
  impl_->put(RequestKind::kSuccessClassify, success_payload(prompt, frame_ref),
             {{"yes_probability", yes_probability}});
}

void FixtureBuilder::add_content_filtered(const std::string& prompt, const std::string& frame_ref) {
  impl_->put(RequestKind::kSuccessClassify, success_payload(prompt, frame_ref),
             {{"content_filtered", true}});
}

void FixtureBuilder::add_rephrase(const std::string& question, AnswerValue answer,
                                  const std::string& statement) {
  impl_->put(RequestKind::kRephrase, rephrase_payload(question, answer),
             {{"statement", statement}});
}

void FixtureBuilder::add_rephrase_no_content(const std::string& question, AnswerValue answer) {
  impl_->put(RequestKind::kRephrase, rephrase_payload(question, answer), {{"no_content", true}});
}

void FixtureBuilder::add_entail(const std::string& premise, const std::string& hypothesis,
                                double probability) {
  impl_->put(RequestKind::kEntail, entail_payload(premise, hypothesis),
             {{"probability", probability}});
}

void FixtureBuilder::add_entail_logits(const std::string& premise, const std::string& hypothesis,
                                       double entail_logit, double contra_logit) {
  impl_->put(RequestKind::kEntail, entail_payload(premise, hypothesis),
             {{"entail_logit", entail_logit}, {"contra_logit", contra_logit}});
}

void FixtureBuilder::add_embedding(const std::string& text, const std::vector<double>& vector) {
  impl_->put(RequestKind::kEmbed, embed_payload(text), {{"vector", vector}});
}

std::string FixtureBuilder::dump() const {
  json header{{"version", impl_->header.version},
              {"embed_dim", impl_->header.embed_dim},
              {"entail_prior", impl_->header.entail_prior}};
  if (impl_->header.run_seed) header["run_seed"] = *impl_->header.run_seed;
  const json doc{{"header", std::move(header)}, {"entries", impl_->entries}};
  return doc.dump(2) + "\n";
}

void FixtureBuilder::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write fixture: " + path.string());
  out << dump();
}

// ---------------------------------------------------------------------------
// ScriptedBackend

struct ScriptedBackend::Impl {
  FixtureHeader header;
  std::unordered_map<std::string, json> responses;
  std::array<std::atomic<std::uint64_t>, kRequestKindCount> misses{};

  const json* find(const std::string& key) const {
    auto it = responses.find(key);
    return it == responses.end() ? nullptr : &it->second;
  }

  void miss(RequestKind kind) {
    misses[static_cast<std::size_t>(kind)].fetch_add(1, std::memory_order_relaxed);
  }

  double probability(RequestKind kind, const std::string& key) {
    const json* r = find(key);
    if (r == nullptr) {
      miss(kind);
      return 0.5;
    }
    if (r->value("content_filtered", false)) {
      throw ContentFiltered("request rejected by content filter");
    }
    if (r->contains("yes_probability")) return checked_probability((*r)["yes_probability"], "yes_probability");
    return normalize_top_logprobs(logprob_pair(*r));
  }
};

ScriptedBackend::ScriptedBackend(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
ScriptedBackend::ScriptedBackend(ScriptedBackend&&) noexcept = default;
ScriptedBackend::~ScriptedBackend() = default;

ScriptedBackend ScriptedBackend::from_string(const std::string& fixture_json) {
  json doc;
  try {
    doc = json::parse(fixture_json);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("fixture is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("header") || !doc.contains("entries")) {
    throw ValidationError("fixture must be an object with 'header' and 'entries'");
  }
  auto impl = std::make_unique<Impl>();
  const json& h = doc["header"];
  impl->header.version = h.value("version", kFixtureVersion);
  if (impl->header.version != kFixtureVersion) {
    throw ValidationError("unsupported fixture version " + std::to_string(impl->header.version));
  }
  impl->header.embed_dim = h.value("embed_dim", 16);
  impl->header.entail_prior = h.value("entail_prior", 0.5);
  if (h.contains("run_seed")) impl->header.run_seed = h["run_seed"].get<std::uint64_t>();
  for (const auto& [key, entry] : doc["entries"].items()) {
    if (!entry.contains("response")) throw ValidationError("fixture entry without response: " + key);
    impl->responses.emplace(key, entry["response"]);
  }
  return ScriptedBackend(std::move(impl));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open fixture: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

const FixtureHeader& ScriptedBackend::header() const { return impl_->header; }
std::size_t ScriptedBackend::entry_count() const { return impl_->responses.size(); }

std::uint64_t ScriptedBackend::misses(RequestKind kind) const {
  return impl_->misses[static_cast<std::size_t>(kind)].load(std::memory_order_relaxed);
}

std::uint64_t ScriptedBackend::misses() const {
  std::uint64_t total = 0;
  for (const auto& m : impl_->misses) total += m.load(std::memory_order_relaxed);
  return total;
}

CandidateBatch ScriptedBackend::generate_candidates(const std::string& prompt, int max_candidates) {
  if (max_candidates < 1) throw ValidationError("max_candidates must be >= 1");
  CandidateBatch batch;
  const json* r = impl_->find(vqg_key(prompt));
  if (r == nullptr) {
    impl_->miss(RequestKind::kVqg);
    return batch;
  }
  batch.skip = r->value("no_content", false);
  for (const auto& c : r->value("candidates", json::array())) {
    if (static_cast<int>(batch.candidates.size()) >= max_candidates) break;
    CandidateQuestion q;
    q.text = c.at("text").get<std::string>();
    q.log_likelihood = c.at("log_likelihood").get<double>();
    q.token_count = c.contains("token_count") ? c["token_count"].get<int>()
                                               : whitespace_token_count(q.text);
    q.unconstrained = c.value("unconstrained", false);
    batch.candidates.push_back(std::move(q));
  }
  return batch;
}

double ScriptedBackend::answer_yes_probability(const std::string& question,
                                               const std::string& frame_ref) {
  if (question.empty()) throw ValidationError("empty question");
  return impl_->probability(RequestKind::kVqa, vqa_key(question, frame_ref));
}

double ScriptedBackend::success_yes_probability(const std::string& prompt,
                                                const std::string& frame_ref) {
  return impl_->probability(RequestKind::kSuccessClassify, success_key(prompt, frame_ref));
}

std::string ScriptedBackend::rephrase(const std::string& question, AnswerValue answer) {
  const json* r = impl_->find(rephrase_key(question, answer));
  if (r == nullptr) {
    impl_->miss(RequestKind::kRephrase);
    return concatenate_qa(question, answer);
  }
  if (r->value("no_content", false) || !r->contains("statement")) {
    return concatenate_qa(question, answer);
  }
  return (*r)["statement"].get<std::string>();
}

double ScriptedBackend::entail(const std::string& premise, const std::string& hypothesis) {
  if (hypothesis.empty()) throw ValidationError("empty hypothesis");
  const json* r = impl_->find(entail_key(premise, hypothesis));
  if (r == nullptr) {
    if (premise.empty()) return impl_->header.entail_prior;
    impl_->miss(RequestKind::kEntail);
    return 0.5;
  }
  if (r->contains("probability")) return checked_probability((*r)["probability"], "probability");
  return entailment_probability(r->at("entail_logit").get<double>(),
                                r->at("contra_logit").get<double>());
}

std::vector<double> ScriptedBackend::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("empty text");
  const json* r = impl_->find(embed_key(text));
  if (r == nullptr) {
    impl_->miss(RequestKind::kEmbed);
    return hashed_embedding(text, impl_->header.embed_dim);
  }
  return (*r)["vector"].get<std::vector<double>>();
}

// ---------------------------------------------------------------------------
// RecordingBackend

CandidateBatch RecordingBackend::generate_candidates(const std::string& prompt, int max_candidates) {
  CandidateBatch batch = inner_.generate_candidates(prompt, max_candidates);
  std::lock_guard lock(mu_);
  if (batch.skip) {
    sink_.add_vqg_no_content(prompt);
  } else {
    sink_.add_candidates(prompt, batch.candidates);
  }
  return batch;
}

double RecordingBackend::answer_yes_probability(const std::string& question,
                                                const std::string& frame_ref) {
  const double p = inner_.answer_yes_probability(question, frame_ref);
  std::lock_guard lock(mu_);
  sink_.add_vqa(question, frame_ref, p);
  return p;
}

double RecordingBackend::success_yes_probability(const std::string& prompt,
                                                 const std::string& frame_ref) {
  try {
    const double p = inner_.success_yes_probability(prompt, frame_ref);
    std::lock_guard lock(mu_);
    sink_.add_success(prompt, frame_ref, p);
    return p;
  } catch (const ContentFiltered&) {
    std::lock_guard lock(mu_);
    sink_.add_content_filtered(prompt, frame_ref);
    throw;
  }
}

std::string RecordingBackend::rephrase(const std::string& question, AnswerValue answer) {
  std::string s = inner_.rephrase(question, answer);
  std::lock_guard lock(mu_);
  if (trim(s).empty()) {
    sink_.add_rephrase_no_content(question, answer);
    return concatenate_qa(question, answer);
  }
  sink_.add_rephrase(question, answer, s);
  return s;
}

double RecordingBackend::entail(const std::string& premise, const std::string& hypothesis) {
  const double p = inner_.entail(premise, hypothesis);
  std::lock_guard lock(mu_);
  sink_.add_entail(premise, hypothesis, p);
  return p;
}

std::vector<double> RecordingBackend::embed(const std::string& text) {
  std::vector<double> v = inner_.embed(text);
  std::lock_guard lock(mu_);
  sink_.add_embedding(text, v);
  return v;
}

}  // namespace pmd

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "pmd/http_backend.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "pmd/errors.hpp"
#include "pmd/prompts.hpp"
#include "pmd/util.hpp"

namespace pmd {

using nlohmann::json;

namespace {

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<json> parse_json(std::string_view body) {
  json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) return std::nullopt;
  return doc;
}

// Lower-cased alphabetic characters of a token: " Yes." -> "yes".
std::string normalize_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

void log_add_exp(std::optional<double>& acc, double lp) {
  if (!acc) {
    acc = lp;
    return;
  }
  const double m = std::max(*acc, lp);
  acc = m + std::log(std::exp(*acc - m) + std::exp(lp - m));
}

std::string clean_question(std::string_view content) {
  std::string text = trim(content);
  if (auto nl = text.find('\n'); nl != std::string::npos) text = trim(text.substr(0, nl));
  if (starts_with(text, "Q:")) text = trim(text.substr(2));
  return text;
}

const char* kBearerEnv = "OPENAI_API_KEY";

}  // namespace

std::pair<std::string, std::string> split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string_view::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string_view::npos) return {std::string(url), ""};
  std::string prefix(url.substr(path_start));
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {std::string(url.substr(0, path_start)), prefix};
}

HttpResponse HttplibTransport::post_json(const std::string& base_url, const std::string& path,
                                         const std::string& body) {
  httplib::Client client(base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  client.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  client.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  httplib::Headers headers;
  if (const char* key = std::getenv(kBearerEnv); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) throw TransportError("POST " + base_url + path + ": " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------
// ReplayLog

ReplayLog::ReplayLog(const std::filesystem::path& sink)
    : sink_(std::make_unique<std::ofstream>(sink, std::ios::app)) {
  if (!*sink_) throw ValidationError("cannot open replay log: " + sink.string());
}

std::uint64_t ReplayLog::append(std::string path, std::string request, int status,
                                std::string response) {
  std::lock_guard lock(mu_);
  Entry e{entries_.size(), std::move(path), std::move(request), status, std::move(response)};
  if (sink_) {
    json line{{"index", e.index}, {"path", e.path}, {"status", e.status}};
    line["request"] = parse_json(e.request).value_or(json(e.request));
    line["response"] = parse_json(e.response).value_or(json(e.response));
    *sink_ << line.dump() << '\n';
    sink_->flush();
  }
  entries_.push_back(std::move(e));
  return entries_.back().index;
}

std::vector<ReplayLog::Entry> ReplayLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t ReplayLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Wire format

std::string frame_url(std::string_view frame_ref) {
  if (starts_with(frame_ref, "http://") || starts_with(frame_ref, "https://") ||
      starts_with(frame_ref, "data:")) {
    return std::string(frame_ref);
  }
  std::error_code ec;
  const std::filesystem::path path{std::string(frame_ref)};
  if (!std::filesystem::is_regular_file(path, ec)) return std::string(frame_ref);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string ext = to_lower(path.extension().string());
  const char* mime = ext == ".png" ? "image/png" : ext == ".webp" ? "image/webp" : "image/jpeg";
  return std::string("data:") + mime + ";base64," + base64(buf.str());
}

std::string build_chat_body(const BackendConfig& config, std::string_view prompt,
                            std::optional<std::string_view> frame_ref, int n, int max_tokens) {
  json message{{"role", "user"}};
  if (frame_ref) {
    message["content"] = json::array({
        {{"type", "image_url"}, {"image_url", {{"url", frame_url(*frame_ref)}}}},
        {{"type", "text"}, {"text", prompt}},
    });
  } else {
    message["content"] = prompt;
  }
  json body{{"model", config.model_name},
            {"messages", json::array({message})},
            {"logprobs", true},
            {"top_logprobs", 20},
            {"n", n},
            {"max_tokens", max_tokens}};
  if (config.request_seed) body["seed"] = *config.request_seed;
  return body.dump();
}

TokenProbPair parse_yes_no_logprobs(std::string_view response_body) {
  TokenProbPair pair;
  const auto doc = parse_json(response_body);
  if (!doc || !doc->contains("choices") || (*doc)["choices"].empty()) return pair;
  const json& choice = (*doc)["choices"][0];
  if (!choice.contains("logprobs") || choice["logprobs"].is_null()) return pair;
  const json& content = choice["logprobs"].value("content", json::array());
  if (!content.is_array() || content.empty()) return pair;
  const json& first = content[0];
  // top_logprobs normally includes the sampled token; fall back to it alone.
  json candidates = first.value("top_logprobs", json::array());
  if (candidates.empty()) candidates.push_back(first);
  for (const auto& t : candidates) {
    if (!t.contains("token") || !t.contains("logprob") || t["logprob"].is_null()) continue;
    const std::string tok = normalize_token(t["token"].get<std::string>());
    const double lp = t["logprob"].get<double>();
    if (tok == "yes") log_add_exp(pair.yes_logprob, lp);
    if (tok == "no") log_add_exp(pair.no_logprob, lp);
  }
  return pair;
}

std::vector<CandidateQuestion> parse_candidates(std::string_view response_body) {
  std::map<std::string, CandidateQuestion> by_text;
  const auto doc = parse_json(response_body);
  if (!doc || !doc->contains("choices")) return {};
  for (const auto& choice : (*doc)["choices"]) {
    if (!choice.contains("message")) continue;
    const json& content = choice["message"].value("content", json(nullptr));
    if (!content.is_string()) continue;
    CandidateQuestion c;
    c.text = clean_question(content.get<std::string>());
    if (c.text.empty()) continue;
    c.log_likelihood = 0.0;
    c.token_count = whitespace_token_count(c.text);
    if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
      const json& toks = choice["logprobs"].value("content", json::array());
      if (toks.is_array() && !toks.empty()) {
        for (const auto& t : toks) c.log_likelihood += t.value("logprob", 0.0);
        c.token_count = static_cast<int>(toks.size());
      }
    }
    c.log_likelihood = std::min(c.log_likelihood, 0.0);
    auto it = by_text.find(c.text);
    if (it == by_text.end() || it->second.log_likelihood < c.log_likelihood) {
      by_text[c.text] = std::move(c);
    }
  }
  std::vector<CandidateQuestion> out;
  for (auto& [_, c] : by_text) out.push_back(std::move(c));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.log_likelihood > b.log_likelihood;
  });
  return out;
}

std::string parse_first_content(std::string_view response_body) {
  const auto doc = parse_json(response_body);
  if (!doc || !doc->contains("choices") || (*doc)["choices"].empty()) return {};
  const json& choice = (*doc)["choices"][0];
  if (!choice.contains("message")) return {};
  const json& content = choice["message"].value("content", json(nullptr));
  if (!content.is_string()) return {};
  std::string text = trim(content.get<std::string>());
  if (auto nl = text.find('\n'); nl != std::string::npos) text = trim(text.substr(0, nl));
  return text;
}

bool is_content_filtered(const HttpResponse& response) {
  if (response.status == 400) {
    return response.body.find("content_filter") != std::string::npos;
  }
  if (response.status / 100 != 2) return false;
  const auto doc = parse_json(response.body);
  if (!doc || !doc->contains("choices")) return false;
  for (const auto& choice : (*doc)["choices"]) {
    if (choice.value("finish_reason", json(nullptr)) == "content_filter") return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(BackendConfig config, std::shared_ptr<Transport> transport,
                         std::shared_ptr<ReplayLog> log)
    : config_(std::move(config)), transport_(std::move(transport)), log_(std::move(log)) {
  if (config_.endpoint_url.empty()) throw ValidationError("backend endpoint_url is empty");
  if (config_.max_retries < 1) throw ValidationError("backend max_retries must be >= 1");
  if (config_.nli_url.empty()) config_.nli_url = config_.endpoint_url;
  if (config_.embed_url.empty()) config_.embed_url = config_.endpoint_url;
  if (!transport_) transport_ = std::make_shared<HttplibTransport>(config_.timeout);
  if (!log_) log_ = std::make_shared<ReplayLog>();
}

HttpResponse HttpBackend::post(const std::string& url, const std::string& path,
                               const std::string& body) {
  const auto [base, prefix] = split_url(url);
  const std::string full_path = prefix + path;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    HttpResponse res;
    try {
      res = transport_->post_json(base, full_path, body);
    } catch (const TransportError& e) {
      log_->append(full_path, body, 0, e.what());
      last_error = e.what();
      continue;
    }
    log_->append(full_path, body, res.status, res.body);
    if (is_content_filtered(res)) throw ContentFiltered("content filter: " + full_path);
    if (res.status / 100 == 2) return res;
    last_error = "HTTP " + std::to_string(res.status) + " from " + full_path;
    if (res.status != 429 && res.status < 500) break;  // client error: retrying won't help
  }
  throw BackendUnavailable(last_error);
}

CandidateBatch HttpBackend::generate_candidates(const std::string& prompt, int max_candidates) {
  if (max_candidates < 1) throw ValidationError("max_candidates must be >= 1");
  const std::string body =
      build_chat_body(config_, prompt, std::nullopt, max_candidates, config_.vqg_max_tokens);
  CandidateBatch batch;
  // One re-request when no choice carried content; a second miss skips.
  for (int attempt = 0; attempt < 2; ++attempt) {
    const HttpResponse res = post(config_.endpoint_url, "/chat/completions", body);
    batch.candidates = parse_candidates(res.body);
    if (!batch.candidates.empty()) break;
  }
  if (batch.candidates.empty()) {
    batch.skip = true;
    return batch;
  }
  if (static_cast<int>(batch.candidates.size()) > max_candidates) {
    batch.candidates.resize(static_cast<std::size_t>(max_candidates));
  }
  // Hosted chat models decode freely; nothing guarantees the surface form.
  if (config_.gpt_compat) {
    for (auto& c : batch.candidates) c.unconstrained = true;
  }
  return batch;
}

double HttpBackend::yes_probability(const std::string& prompt, const std::string& frame_ref) {
  const std::string body = build_chat_body(config_, prompt, frame_ref, 1, 1);
  HttpResponse res = post(config_.endpoint_url, "/chat/completions", body);
  TokenProbPair pair = parse_yes_no_logprobs(res.body);
  if (!pair.yes_logprob && !pair.no_logprob && parse_first_content(res.body).empty()) {
    res = post(config_.endpoint_url, "/chat/completions", body);
    pair = parse_yes_no_logprobs(res.body);
  }
  return normalize_top_logprobs(pair);
}

double HttpBackend::answer_yes_probability(const std::string& question,
                                           const std::string& frame_ref) {
  if (question.empty()) throw ValidationError("empty question");
  return yes_probability(build_vqa_prompt(question, config_.gpt_compat), frame_ref);
}

double HttpBackend::success_yes_probability(const std::string& prompt,
                                            const std::string& frame_ref) {
  return yes_probability(prompt, frame_ref);
}

std::string HttpBackend::rephrase(const std::string& question, AnswerValue answer) {
  if (answer == AnswerValue::kUnsure) throw ValidationError("Unsure answers are never rephrased");
  const std::string body = build_chat_body(config_, build_rephrase_prompt(question, answer),
                                           std::nullopt, 1, config_.rephrase_max_tokens);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const HttpResponse res = post(config_.endpoint_url, "/chat/completions", body);
    std::string statement = parse_first_content(res.body);
    if (!statement.empty()) return statement;
  }
  return concatenate_qa(question, answer);
}

double HttpBackend::entail(const std::string& premise, const std::string& hypothesis) {
  if (hypothesis.empty()) throw ValidationError("empty hypothesis");
  const json body{{"premise", premise}, {"hypothesis", hypothesis}};
  const HttpResponse res = post(config_.nli_url, "/nli", body.dump());
  const auto doc = parse_json(res.body);
  if (!doc || !doc->contains("entail_logit") || !doc->contains("contra_logit")) {
    throw BackendUnavailable("malformed NLI response");
  }
  return entailment_probability((*doc)["entail_logit"].get<double>(),
                                (*doc)["contra_logit"].get<double>());
}

std::vector<double> HttpBackend::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("empty text");
  const json body{{"text", text}};
  const HttpResponse res = post(config_.embed_url, "/embed", body.dump());
  const auto doc = parse_json(res.body);
  if (!doc || !doc->contains("vector") || !(*doc)["vector"].is_array()) {
    throw BackendUnavailable("malformed embedding response");
  }
  return (*doc)["vector"].get<std::vector<double>>();
}

}  // namespace pmd

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pmd/backend.hpp"

namespace pmd {

struct BackendConfig {
  std::string endpoint_url;  // e.g. http://localhost:8000/v1
  std::string model_name;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 1;  // extra attempts after a transport failure or 429/5xx
  std::optional<std::int64_t> request_seed;
  // Overrides for the NLI and embedding servers; default to endpoint_url.
  std::string nli_url;
  std::string embed_url;
  // Hosted chat models without constrained decoding: adds the explicit
  // yes/no instructions to the question generation and answering prompts.
  bool gpt_compat = false;
  int vqg_max_tokens = 32;
  int rephrase_max_tokens = 48;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raised by a Transport when no HTTP response was obtained at all.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// POST `body` (JSON) to `base_url` + `path`.
  virtual HttpResponse post_json(const std::string& base_url, const std::string& path,
                                 const std::string& body) = 0;
};

/// cpp-httplib transport (http and https).
class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}
  HttpResponse post_json(const std::string& base_url, const std::string& path,
                         const std::string& body) override;

 private:
  std::chrono::milliseconds timeout_;
};

/// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_url(std::string_view url);

/// Request/response log with a monotonically increasing call index. Appends
/// are serialised; an optional JSONL sink mirrors every entry.
class ReplayLog {
 public:
  struct Entry {
    std::uint64_t index = 0;
    std::string path;
    std::string request;
    int status = 0;
    std::string response;
  };

  ReplayLog() = default;
  explicit ReplayLog(const std::filesystem::path& sink);

  std::uint64_t append(std::string path, std::string request, int status, std::string response);
  std::vector<Entry> entries() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
  std::unique_ptr<std::ofstream> sink_;
};

// Wire-format helpers, exposed for tests.

/// {model, messages, logprobs:true, top_logprobs:20, n, max_tokens, seed?}.
/// With a frame the user message carries an image_url content part.
std::string build_chat_body(const BackendConfig& config, std::string_view prompt,
                            std::optional<std::string_view> frame_ref, int n, int max_tokens);

/// Image reference for a content part: URLs and data URIs pass through; a
/// readable local file becomes a base64 data URI.
std::string frame_url(std::string_view frame_ref);

/// First-position Yes/No log probabilities from a chat completion response.
/// Case and surrounding whitespace/punctuation of tokens are ignored; variants
/// of the same answer are combined with log-sum-exp.
TokenProbPair parse_yes_no_logprobs(std::string_view response_body);

/// Candidates from every choice that has content, descending by summed token
/// log probability, duplicates collapsed.
std::vector<CandidateQuestion> parse_candidates(std::string_view response_body);

/// Trimmed first-line content of the first choice; empty when absent/null.
std::string parse_first_content(std::string_view response_body);

/// True when the response reports a content-filter refusal.
bool is_content_filtered(const HttpResponse& response);

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config, std::shared_ptr<Transport> transport = nullptr,
                       std::shared_ptr<ReplayLog> log = nullptr);

  CandidateBatch generate_candidates(const std::string& prompt, int max_candidates) override;
  double answer_yes_probability(const std::string& question, const std::string& frame_ref) override;
  double success_yes_probability(const std::string& prompt, const std::string& frame_ref) override;
  std::string rephrase(const std::string& question, AnswerValue answer) override;
  double entail(const std::string& premise, const std::string& hypothesis) override;
  std::vector<double> embed(const std::string& text) override;

  const BackendConfig& config() const { return config_; }
  const std::shared_ptr<ReplayLog>& log() const { return log_; }

 private:
  HttpResponse post(const std::string& url, const std::string& path, const std::string& body);
  double yes_probability(const std::string& prompt, const std::string& frame_ref);

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ReplayLog> log_;
};

}  // namespace pmd

#pragma once

// Loopback server speaking the chat-completions, /nli and /embed wire
// formats with deterministic, hash-derived answers.

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace httplib {
class Server;
}

namespace stub {

struct Reply {
  int status = 200;
  std::string body;
};

class StubServer {
 public:
  /// Return a reply to override the default behaviour for one request.
  using Hook = std::function<std::optional<Reply>(const std::string& path,
                                                  const nlohmann::json& body, int call_index)>;

  StubServer();
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  /// Base URL including the /v1 prefix.
  std::string url() const;
  int port() const { return port_; }

  void set_hook(Hook hook);
  int calls() const { return calls_.load(); }
  std::vector<std::string> paths() const;

 private:
  Reply handle(const std::string& path, const std::string& body);

  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  mutable std::mutex mu_;
  Hook hook_;
  std::vector<std::string> paths_;
};

/// Chat completion with first-token Yes/No top logprobs; a missing value
/// leaves that token out of the list.
std::string yes_no_completion(std::optional<double> yes_logprob, std::optional<double> no_logprob);
/// Chat completion with one choice per text (null entries have no content).
std::string text_completion(const std::vector<std::optional<std::string>>& contents);

}  // namespace stub

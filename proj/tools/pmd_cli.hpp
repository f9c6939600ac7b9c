#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "pmd/backend.hpp"
#include "pmd/http_backend.hpp"
#include "pmd/orchestrator.hpp"

namespace pmd::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kBackendFailure = 2 };

struct BackendSpec {
  std::string kind = "scripted";  // "scripted" | "http"
  std::filesystem::path fixture;
  BackendConfig http;
  std::filesystem::path replay_log;  // optional JSONL request log
};

/// Run configuration file: the RunConfig fields at top level plus
/// "dataset", "out_dir", "workers", "icl_bank" and a "backend" object.
/// Relative paths resolve against the file's directory.
struct CliConfig {
  RunConfig run;
  BackendSpec backend;
  std::filesystem::path dataset;
  std::filesystem::path out_dir = "out";
  std::filesystem::path icl_bank;
  int workers = 1;
};

/// Throws ValidationError on unknown keys, wrong types or bad values.
CliConfig load_config(const std::filesystem::path& path);
CliConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);

std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

/// Entry point behind the `pmd` executable.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pmd::cli

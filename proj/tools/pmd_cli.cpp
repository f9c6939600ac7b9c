#include "pmd_cli.hpp"

#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "pmd/dataset_io.hpp"
#include "pmd/errors.hpp"
#include "pmd/report.hpp"
#include "pmd/scripted_backend.hpp"
#include "pmd/synthetic.hpp"
#include "pmd/tuning.hpp"

namespace pmd::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
T field(const json& obj, const char* key, const char* where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const char* where) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.contains(key)) throw ValidationError(std::string(where) + ": unknown key '" + key + "'");
  }
}

BackendSpec parse_backend(const json& b, const fs::path& base) {
  if (!b.is_object()) throw ValidationError("config: 'backend' must be an object");
  reject_unknown(b,
                 {"kind", "fixture", "endpoint_url", "model_name", "timeout_ms", "max_retries",
                  "request_seed", "nli_url", "embed_url", "replay_log", "vqg_max_tokens",
                  "rephrase_max_tokens"},
                 "backend");
  BackendSpec spec;
  if (b.contains("kind")) spec.kind = field<std::string>(b, "kind", "backend");
  if (spec.kind != "scripted" && spec.kind != "http") {
    throw ValidationError("backend: kind must be 'scripted' or 'http', got '" + spec.kind + "'");
  }
  if (b.contains("fixture")) spec.fixture = resolve(base, field<std::string>(b, "fixture", "backend"));
  if (b.contains("replay_log")) {
    spec.replay_log = resolve(base, field<std::string>(b, "replay_log", "backend"));
  }
  BackendConfig& h = spec.http;
  if (b.contains("endpoint_url")) h.endpoint_url = field<std::string>(b, "endpoint_url", "backend");
  if (b.contains("model_name")) h.model_name = field<std::string>(b, "model_name", "backend");
  if (b.contains("timeout_ms")) {
    h.timeout = std::chrono::milliseconds(field<std::int64_t>(b, "timeout_ms", "backend"));
  }
  if (b.contains("max_retries")) h.max_retries = field<int>(b, "max_retries", "backend");
  if (b.contains("request_seed")) h.request_seed = field<std::int64_t>(b, "request_seed", "backend");
  if (b.contains("nli_url")) h.nli_url = field<std::string>(b, "nli_url", "backend");
  if (b.contains("embed_url")) h.embed_url = field<std::string>(b, "embed_url", "backend");
  if (b.contains("vqg_max_tokens")) h.vqg_max_tokens = field<int>(b, "vqg_max_tokens", "backend");
  if (b.contains("rephrase_max_tokens")) {
    h.rephrase_max_tokens = field<int>(b, "rephrase_max_tokens", "backend");
  }
  if (spec.kind == "scripted" && spec.fixture.empty()) {
    throw ValidationError("backend: scripted backend needs 'fixture'");
  }
  if (spec.kind == "http" && h.endpoint_url.empty()) {
    throw ValidationError("backend: http backend needs 'endpoint_url'");
  }
  return spec;
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out_dir;
  bool strict = false;
};

CliConfig effective_config(const Globals& g, bool require_config) {
  CliConfig cfg;
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
  } else if (require_config) {
    throw ValidationError("--config is required for this command");
  }
  if (g.seed) cfg.run.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (cfg.workers < 1) throw ValidationError("workers must be >= 1");
  cfg.run.validate();
  return cfg;
}

fs::path results_path(const std::string& flag, const CliConfig& cfg) {
  return flag.empty() ? cfg.out_dir / "results.jsonl" : fs::path(flag);
}

std::vector<Example> load_examples(const CliConfig& cfg, bool strict, std::ostream& err) {
  if (cfg.dataset.empty()) throw ValidationError("config: 'dataset' is not set");
  Dataset ds = load_dataset(cfg.dataset, strict);
  if (!ds.ok()) {
    err << format_errors(ds.errors);
    throw ValidationError(std::to_string(ds.errors.size()) + " invalid dataset line(s) in " +
                          cfg.dataset.string());
  }
  return std::move(ds.examples);
}

void print_summary(const RunSummary& s, std::ostream& out) {
  auto show = [&](const char* name, const std::optional<double>& v) {
    out << "  " << name << ": " << (v ? format_real(*v) : std::string("null")) << "\n";
  };
  show("accuracy", s.accuracy);
  show("mean_example_relevance", s.mean_example_relevance);
  show("mean_example_informativeness", s.mean_example_informativeness);
  show("mean_iterations", s.mean_iterations);
  show("mean_information_gain", s.mean_information_gain);
  out << "  evaluated=" << s.counts.evaluated << " skipped=" << s.counts.skipped
      << " errored=" << s.counts.errored << " null_metric=" << s.counts.null_metric << "\n";
}

std::vector<ExampleResult> run_examples(const CliConfig& cfg, const RunConfig& run,
                                        const std::vector<Example>& examples,
                                        std::ostream& err) {
  auto backend = make_backend(cfg.backend);
  const IclBank bank = cfg.icl_bank.empty() ? default_icl_bank() : load_icl_bank(cfg.icl_bank);
  DialogEngine engine(*backend, run, bank);
  auto results = evaluate(examples, engine, cfg.workers);
  if (auto* scripted = dynamic_cast<ScriptedBackend*>(backend.get())) {
    if (scripted->misses() > 0) {
      err << "warning: " << scripted->misses()
          << " backend request(s) had no fixture entry and used fallbacks\n";
    }
  }
  for (auto& r : results) r = rounded(r);
  return results;
}

int write_run_outputs(const std::vector<ExampleResult>& results, const fs::path& out_dir,
                      std::ostream& out, std::ostream& err) {
  const RunSummary summary = summarize(results);
  write_text_file(out_dir / "results.jsonl", results_to_jsonl(results));
  write_text_file(out_dir / "summary.json", summary_to_json(summary));
  write_text_file(out_dir / "scatter.csv", scatter_csv(results));
  out << "wrote " << (out_dir / "results.jsonl").string() << ", summary.json, scatter.csv\n";
  print_summary(summary, out);
  if (summary.counts.errored > 0) {
    for (const auto& r : results) {
      if (r.status == ExampleStatus::kErrored) err << "error: " << r.id << ": " << r.note << "\n";
    }
    return kBackendFailure;
  }
  return kOk;
}

std::vector<ExampleResult> read_results(const fs::path& path) {
  return results_from_jsonl(read_text_file(path));
}

}  // namespace

CliConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  reject_unknown(j,
                 {"dataset", "out_dir", "workers", "icl_bank", "backend", "max_iterations", "delta",
                  "epsilon", "tau", "ranking_mode", "icl_enabled", "rationale_free",
                  "length_penalty", "seed", "max_candidates", "gpt_compat", "disable_early_stop"},
                 "config");
  CliConfig cfg;
  RunConfig& r = cfg.run;
  const char* where = "config";
  if (j.contains("dataset")) cfg.dataset = resolve(base_dir, field<std::string>(j, "dataset", where));
  if (j.contains("out_dir")) cfg.out_dir = resolve(base_dir, field<std::string>(j, "out_dir", where));
  if (j.contains("icl_bank")) {
    cfg.icl_bank = resolve(base_dir, field<std::string>(j, "icl_bank", where));
  }
  if (j.contains("workers")) cfg.workers = field<int>(j, "workers", where);
  if (j.contains("backend")) cfg.backend = parse_backend(j.at("backend"), base_dir);
  if (j.contains("max_iterations")) r.max_iterations = field<int>(j, "max_iterations", where);
  if (j.contains("delta")) r.delta = field<double>(j, "delta", where);
  if (j.contains("epsilon")) r.epsilon = field<double>(j, "epsilon", where);
  if (j.contains("tau")) r.tau = field<double>(j, "tau", where);
  if (j.contains("ranking_mode")) {
    r.ranking_mode = parse_ranking_mode(field<std::string>(j, "ranking_mode", where));
  }
  if (j.contains("icl_enabled")) r.icl_enabled = field<bool>(j, "icl_enabled", where);
  if (j.contains("rationale_free")) r.rationale_free = field<bool>(j, "rationale_free", where);
  if (j.contains("length_penalty") && !j.at("length_penalty").is_null()) {
    r.length_penalty = field<double>(j, "length_penalty", where);
  }
  if (j.contains("seed")) r.seed = field<std::uint64_t>(j, "seed", where);
  if (j.contains("max_candidates")) r.max_candidates = field<int>(j, "max_candidates", where);
  if (j.contains("gpt_compat")) r.gpt_compat = field<bool>(j, "gpt_compat", where);
  if (j.contains("disable_early_stop")) {
    r.disable_early_stop = field<bool>(j, "disable_early_stop", where);
  }
  cfg.backend.http.gpt_compat = r.gpt_compat;
  r.validate();
  return cfg;
}

CliConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
  return parse_config(read_text_file(path), path.parent_path());
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  if (spec.kind == "scripted") {
    if (!fs::is_regular_file(spec.fixture)) {
      throw ValidationError("fixture file not found: " + spec.fixture.string());
    }
    return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(spec.fixture));
  }
  auto log = spec.replay_log.empty() ? std::make_shared<ReplayLog>()
                                     : std::make_shared<ReplayLog>(spec.replay_log);
  return std::make_unique<HttpBackend>(spec.http, nullptr, std::move(log));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Procedural mistake detection through coherent self-dialog", "pmd"};
  app.fallthrough();
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path, "Run configuration JSON");
  app.add_option("--seed", g.seed, "Global seed (overrides the config)");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("--strict", g.strict, "Abort on the first invalid dataset line");

  auto* run = app.add_subcommand("run", "Evaluate the dataset with self-dialogs");
  auto* run_rf = app.add_subcommand("run-rationale-free", "Evaluate the no-dialog baseline");

  std::string results_flag;
  auto* tune_tau_cmd = app.add_subcommand("tune-tau", "Pick the mistake threshold from results");
  tune_tau_cmd->add_option("--results", results_flag, "results.jsonl (default: <out-dir>)");

  auto* tune_stop = app.add_subcommand("tune-stopping", "Grid-search the stopping parameters");
  tune_stop->add_option("--results", results_flag,
                        "Full-length results.jsonl; runs the dialogs when omitted");

  auto* det = app.add_subcommand("det", "Write detection error tradeoff points");
  det->add_option("--results", results_flag, "results.jsonl (default: <out-dir>)");

  auto* dpo = app.add_subcommand("export-dpo", "Write DPO preference pairs");
  dpo->add_option("--results", results_flag, "results.jsonl (default: <out-dir>)");

  SynthConfig synth;
  auto* synth_cmd = app.add_subcommand("synth-fixtures", "Generate a synthetic dataset and fixture");
  synth_cmd->add_option("--count", synth.count, "Number of examples")->capture_default_str();
  synth_cmd->add_option("--mistakes", synth.mistakes, "Examples labeled mistake")
      ->capture_default_str();
  synth_cmd->add_option("--content-filtered", synth.content_filtered,
                        "Examples refused by the content filter");
  synth_cmd->add_option("--embed-dim", synth.embed_dim, "Embedding dimension");
  synth_cmd->add_option("--signal", synth.signal, "Strength of the label signal in responses")
      ->capture_default_str();

  std::string dataset_arg;
  auto* validate = app.add_subcommand("validate-dataset", "Check a dataset file");
  validate->add_option("dataset", dataset_arg, "Dataset JSONL (default: the config's)");

  auto* report = app.add_subcommand("report", "Rebuild summary and tables from results.jsonl");
  report->add_option("--results", results_flag, "results.jsonl (default: <out-dir>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kValidation;
  }

  try {
    if (run->parsed() || run_rf->parsed()) {
      CliConfig cfg = effective_config(g, true);
      if (run_rf->parsed()) cfg.run.rationale_free = true;
      const auto examples = load_examples(cfg, g.strict, err);
      const auto results = run_examples(cfg, cfg.run, examples, err);
      return write_run_outputs(results, cfg.out_dir, out, err);
    }

    if (tune_tau_cmd->parsed()) {
      const CliConfig cfg = effective_config(g, false);
      const auto results = read_results(results_path(results_flag, cfg));
      const auto decisions = scored_decisions(results);
      const TauChoice choice = tune_tau(decisions);
      write_text_file(cfg.out_dir / "tuning.json", tau_report_json(choice, decisions));
      out << "best tau " << format_real(choice.tau) << " accuracy " << format_real(choice.accuracy)
          << "\n";
      return kOk;
    }

    if (tune_stop->parsed()) {
      CliConfig cfg = effective_config(g, results_flag.empty());
      std::vector<ExampleResult> traces;
      if (!results_flag.empty()) {
        traces = read_results(results_flag);
      } else {
        RunConfig full = cfg.run;
        full.disable_early_stop = true;
        full.rationale_free = false;
        traces = run_examples(cfg, full, load_examples(cfg, g.strict, err), err);
      }
      const TuneResult best = tune_stopping(traces, cfg.run.max_iterations);
      write_text_file(cfg.out_dir / "tuning.json", tuning_report_json(best));
      out << "best delta " << format_real(best.best_delta) << " epsilon "
          << format_real(best.best_epsilon) << " tau " << format_real(best.best_tau)
          << " objective " << format_real(round_significant(best.objective_value)) << "\n";
      return kOk;
    }

    if (det->parsed()) {
      const CliConfig cfg = effective_config(g, false);
      const auto results = read_results(results_path(results_flag, cfg));
      const auto points = det_curve(scored_decisions(results));
      write_text_file(cfg.out_dir / "det.csv", det_csv(points));
      out << "wrote " << (cfg.out_dir / "det.csv").string() << "\n";
      return kOk;
    }

    if (dpo->parsed()) {
      const CliConfig cfg = effective_config(g, false);
      const auto results = read_results(results_path(results_flag, cfg));
      const auto pairs = export_dpo_pairs(results, cfg.run.seed);
      write_text_file(cfg.out_dir / "dpo_pairs.jsonl", dpo_pairs_to_jsonl(pairs));
      out << "wrote " << pairs.size() << " preference pair(s) to "
          << (cfg.out_dir / "dpo_pairs.jsonl").string() << "\n";
      return kOk;
    }

    if (synth_cmd->parsed()) {
      const CliConfig cfg = effective_config(g, false);
      synth.seed = cfg.run.seed;
      const SynthOutput generated = generate_synthetic_fixture(synth);
      write_text_file(cfg.out_dir / "dataset.jsonl", generated.dataset_jsonl);
      write_text_file(cfg.out_dir / "fixture.json", generated.fixture_json);
      out << "wrote " << generated.examples.size() << " examples to "
          << (cfg.out_dir / "dataset.jsonl").string() << " and fixture.json\n";
      return kOk;
    }

    if (validate->parsed()) {
      fs::path path = dataset_arg;
      if (path.empty()) path = effective_config(g, true).dataset;
      const Dataset ds = load_dataset(path, g.strict);
      const auto& m = ds.manifest;
      out << "examples: " << ds.examples.size() << "\n"
          << "splits: train=" << m.count(Split::kTrain) << " val=" << m.count(Split::kVal)
          << " test=" << m.count(Split::kTest) << "\n"
          << "types:";
      for (MistakeType t : {MistakeType::kNone, MistakeType::kIncomplete, MistakeType::kWrongVerb,
                            MistakeType::kWrongNoun, MistakeType::kWrongVerbNoun}) {
        out << " " << (t == MistakeType::kNone ? "success" : to_string(t)) << "=" << m.count(t);
      }
      out << "\nsha256: " << m.checksum << "\n";
      if (!ds.ok()) {
        err << format_errors(ds.errors);
        return kValidation;
      }
      return kOk;
    }

    if (report->parsed()) {
      const CliConfig cfg = effective_config(g, false);
      const auto results = read_results(results_path(results_flag, cfg));
      const RunSummary summary = summarize(results);
      write_text_file(cfg.out_dir / "summary.json", summary_to_json(summary));
      write_text_file(cfg.out_dir / "scatter.csv", scatter_csv(results));
      print_summary(summary, out);
      return kOk;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const BackendUnavailable& e) {
    err << "backend failure: " << e.what() << "\n";
    return kBackendFailure;
  } catch (const ContentFiltered& e) {
    err << "backend failure: " << e.what() << "\n";
    return kBackendFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}

}  // namespace pmd::cli

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/stub_server.hpp"
#include "json.hpp"
#include "pmd/errors.hpp"
#include "pmd/report.hpp"
#include "pmd_cli.hpp"

namespace fs = std::filesystem;
using namespace pmd;
using nlohmann::json;

namespace {

const fs::path kData = fs::path(PMD_DATA_DIR) / "synthetic";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::vector<const char*> argv{"pmd"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pmd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(json extra = json::object()) {
    json cfg = {{"dataset", (kData / "dataset.jsonl").string()},
                {"out_dir", (dir_ / "out").string()},
                {"seed", 7},
                {"backend", {{"kind", "scripted"}, {"fixture", (kData / "fixture.json").string()}}}};
    cfg.update(extra);
    const fs::path p = dir_ / "config.json";
    spit(p, cfg.dump(2));
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UnknownFlagIsValidationFailure) {
  const auto r = invoke({"run", "--bogus"});
  EXPECT_EQ(r.code, cli::kValidation);
}

TEST_F(CliTest, MissingSubcommandIsValidationFailure) { EXPECT_EQ(invoke({}).code, cli::kValidation); }

TEST_F(CliTest, RunRequiresConfig) {
  const auto r = invoke({"run"});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("--config"), std::string::npos);
}

TEST_F(CliTest, ValidateDatasetReportsLineNumbers) {
  const fs::path ds = dir_ / "bad.jsonl";
  std::string text = slurp(kData / "dataset.jsonl");
  text += "{\"id\": \"broken\"}\n";
  spit(ds, text);
  const auto r = invoke({"validate-dataset", ds.string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("line 21"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("examples: 20"), std::string::npos);
}

TEST_F(CliTest, ValidateDatasetAcceptsBundledData) {
  const auto r = invoke({"validate-dataset", (kData / "dataset.jsonl").string()});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("sha256: "), std::string::npos);
}

TEST_F(CliTest, RunWritesOutputs) {
  const auto r = invoke({"--config", write_config().string(), "run"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  for (const char* name : {"results.jsonl", "summary.json", "scatter.csv"}) {
    EXPECT_TRUE(fs::is_regular_file(dir_ / "out" / name)) << name;
  }
  const json summary = json::parse(slurp(dir_ / "out" / "summary.json"));
  EXPECT_EQ(summary["counts"]["evaluated"].get<int>() + summary["counts"]["skipped"].get<int>() +
                summary["counts"]["errored"].get<int>(),
            20);
  EXPECT_EQ(summary["counts"]["errored"], 0);
  EXPECT_EQ(r.err.find("warning"), std::string::npos) << r.err;
  const auto results = results_from_jsonl(slurp(dir_ / "out" / "results.jsonl"));
  EXPECT_EQ(summary_to_json(summarize(results)), slurp(dir_ / "out" / "summary.json"));
}

TEST_F(CliTest, WorkerCountDoesNotChangeOutput) {
  const fs::path cfg = write_config({{"ranking_mode", "coherence"}, {"icl_enabled", true}});
  ASSERT_EQ(invoke({"--config", cfg.string(), "--workers", "1", "--out-dir", (dir_ / "a").string(), "run"}).code, 0);
  ASSERT_EQ(invoke({"--config", cfg.string(), "--workers", "8", "--out-dir", (dir_ / "b").string(), "run"}).code, 0);
  for (const char* name : {"results.jsonl", "summary.json", "scatter.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / name), slurp(dir_ / "b" / name)) << name;
  }
}

TEST_F(CliTest, RationaleFreeRun) {
  const auto r = invoke({"--config", write_config().string(), "run-rationale-free"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto results = results_from_jsonl(slurp(dir_ / "out" / "results.jsonl"));
  for (const auto& x : results) {
    if (x.status == ExampleStatus::kOk) {
      EXPECT_EQ(x.state.stop_reason, StopReason::kRationaleFree);
      EXPECT_TRUE(x.state.turns.empty());
    }
  }
}

TEST_F(CliTest, DownstreamCommandsConsumeResults) {
  const fs::path cfg = write_config();
  ASSERT_EQ(invoke({"--config", cfg.string(), "run"}).code, 0);
  const auto tau = invoke({"--config", cfg.string(), "tune-tau"});
  EXPECT_EQ(tau.code, 0) << tau.err;
  EXPECT_NE(tau.out.find("best tau"), std::string::npos);
  EXPECT_TRUE(json::parse(slurp(dir_ / "out" / "tuning.json")).contains("best_tau"));

  const auto det = invoke({"--config", cfg.string(), "det"});
  EXPECT_EQ(det.code, 0) << det.err;
  EXPECT_EQ(slurp(dir_ / "out" / "det.csv").rfind("tau,miss_rate,false_alarm_rate\n", 0), 0u);

  const auto dpo = invoke({"--config", cfg.string(), "export-dpo"});
  EXPECT_EQ(dpo.code, 0) << dpo.err;
  EXPECT_TRUE(fs::is_regular_file(dir_ / "out" / "dpo_pairs.jsonl"));

  const std::string summary = slurp(dir_ / "out" / "summary.json");
  fs::remove(dir_ / "out" / "summary.json");
  const auto rep = invoke({"--config", cfg.string(), "report"});
  EXPECT_EQ(rep.code, 0) << rep.err;
  EXPECT_EQ(slurp(dir_ / "out" / "summary.json"), summary);
}

TEST_F(CliTest, TuneStoppingRunsFullTraces) {
  const auto r = invoke({"--config", write_config({{"max_iterations", 4}}).string(), "tune-stopping"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json t = json::parse(slurp(dir_ / "out" / "tuning.json"));
  EXPECT_TRUE(t.contains("best_delta"));
  EXPECT_TRUE(t.contains("best_epsilon"));
}

TEST_F(CliTest, SynthFixturesMatchesBundledData) {
  const auto r = invoke({"--seed", "7", "--out-dir", dir_.string(), "synth-fixtures", "--count", "20",
                      "--mistakes", "10", "--signal", "0.5", "--content-filtered", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "dataset.jsonl"), slurp(kData / "dataset.jsonl"));
  EXPECT_EQ(slurp(dir_ / "fixture.json"), slurp(kData / "fixture.json"));
}

TEST_F(CliTest, UnreachableBackendExitsWithBackendFailure) {
  std::string url;
  {
    stub::StubServer server;
    url = server.url();
  }
  const fs::path cfg = write_config(
      {{"max_iterations", 2},
       {"backend", {{"kind", "http"}, {"endpoint_url", url}, {"model_name", "m"}, {"timeout_ms", 300}}}});
  const auto r = invoke({"--config", cfg.string(), "run"});
  EXPECT_EQ(r.code, cli::kBackendFailure);
  EXPECT_NE(r.err.find("error: "), std::string::npos);
}

TEST_F(CliTest, HttpBackendAgainstStub) {
  stub::StubServer server;
  const fs::path cfg = write_config(
      {{"max_iterations", 3},
       {"backend", {{"kind", "http"}, {"endpoint_url", server.url()}, {"model_name", "m"}}}});
  const auto r = invoke({"--config", cfg.string(), "run"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_GT(server.calls(), 20);
}

TEST(ParseConfig, RejectsUnknownKeys) {
  EXPECT_THROW(cli::parse_config(R"({"datset": "x"})", ""), ValidationError);
  EXPECT_THROW(cli::parse_config(R"({"backend": {"kind": "scripted", "fixture": "f", "colour": 1}})", ""),
               ValidationError);
}

TEST(ParseConfig, RejectsBadValues) {
  EXPECT_THROW(cli::parse_config(R"({"max_iterations": "ten"})", ""), ValidationError);
  EXPECT_THROW(cli::parse_config(R"({"delta": 1.5})", ""), ValidationError);
  EXPECT_THROW(cli::parse_config(R"({"ranking_mode": "random"})", ""), ValidationError);
  EXPECT_THROW(cli::parse_config(R"({"backend": {"kind": "grpc"}})", ""), ValidationError);
  EXPECT_THROW(cli::parse_config(R"({"backend": {"kind": "http"}})", ""), ValidationError);
  EXPECT_THROW(cli::parse_config("[1, 2]", ""), ValidationError);
  EXPECT_THROW(cli::parse_config("{", ""), ValidationError);
}

TEST(ParseConfig, ResolvesPathsAndFields) {
  const auto c = cli::parse_config(
      R"({"dataset": "d.jsonl", "out_dir": "/abs/out", "seed": 3, "ranking_mode": "diversity",
          "length_penalty": null, "gpt_compat": true,
          "backend": {"kind": "http", "endpoint_url": "http://h/v1", "timeout_ms": 250}})",
      "/base");
  EXPECT_EQ(c.dataset, fs::path("/base/d.jsonl"));
  EXPECT_EQ(c.out_dir, fs::path("/abs/out"));
  EXPECT_EQ(c.run.seed, 3u);
  EXPECT_EQ(c.run.ranking_mode, RankingMode::kDiversity);
  EXPECT_FALSE(c.run.length_penalty.has_value());
  EXPECT_TRUE(c.backend.http.gpt_compat);
  EXPECT_EQ(c.backend.http.timeout, std::chrono::milliseconds(250));
}

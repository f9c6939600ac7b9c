#include <gtest/gtest.h>

#include <filesystem>

#include "pmd/dataset_io.hpp"
#include "pmd/errors.hpp"
#include "pmd/orchestrator.hpp"
#include "pmd/scripted_backend.hpp"
#include "pmd/synthetic.hpp"

using namespace pmd;

TEST(TemplateStatement, Demonstrations) {
  EXPECT_EQ(template_statement("Is there a bowl on the table?", AnswerValue::kYes),
            "There is a bowl on the table.");
  EXPECT_EQ(template_statement("Are the eggs cracked?", AnswerValue::kNo), "The eggs are not cracked.");
  EXPECT_EQ(template_statement("Is the lid on?", AnswerValue::kNo), "The lid is not on.");
  EXPECT_EQ(template_statement("Where is the lid?", AnswerValue::kYes), "");
}

TEST(SynthConfig, Validation) {
  SynthConfig c;
  c.count = 4;
  c.mistakes = 5;
  EXPECT_THROW(c.validate(), ValidationError);
  c.mistakes = 2;
  EXPECT_NO_THROW(c.validate());
  c.rephrase_no_content_rate = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(SyntheticExamples, BalanceAndIds) {
  SynthConfig c;
  c.count = 10;
  c.mistakes = 5;
  c.seed = 3;
  const auto ex = synthetic_examples(c);
  ASSERT_EQ(ex.size(), 10u);
  int mistakes = 0;
  for (const auto& e : ex) {
    mistakes += e.label == Label::kMistake ? 1 : 0;
    EXPECT_EQ(e.label == Label::kSuccess, e.mistake_type == MistakeType::kNone);
  }
  EXPECT_EQ(mistakes, 5);
  EXPECT_EQ(ex[0].id, "syn-000");
  EXPECT_EQ(ex[9].id, "syn-009");
  const auto ds = parse_dataset(dataset_to_jsonl(ex), true);
  EXPECT_EQ(ds.examples, ex);
}

TEST(GenerateSyntheticFixture, DeterministicUnderSeed) {
  SynthConfig c;
  c.count = 4;
  c.mistakes = 2;
  c.seed = 11;
  const auto a = generate_synthetic_fixture(c);
  const auto b = generate_synthetic_fixture(c);
  EXPECT_EQ(a.dataset_jsonl, b.dataset_jsonl);
  EXPECT_EQ(a.fixture_json, b.fixture_json);
  c.seed = 12;
  EXPECT_NE(generate_synthetic_fixture(c).fixture_json, a.fixture_json);
}

TEST(GenerateSyntheticFixture, ReplaysWithoutMisses) {
  SynthConfig c;
  c.count = 6;
  c.mistakes = 3;
  c.seed = 5;
  c.content_filtered = 1;
  const auto out = generate_synthetic_fixture(c);
  auto backend = ScriptedBackend::from_string(out.fixture_json);
  int skipped = 0;
  for (RankingMode mode : {RankingMode::kLikelihood, RankingMode::kCoherence, RankingMode::kDiversity}) {
    for (bool icl : {false, true}) {
      for (bool early_stop : {true, false}) {
        RunConfig rc;
        rc.ranking_mode = mode;
        rc.icl_enabled = icl;
        rc.seed = c.seed;
        rc.disable_early_stop = !early_stop;
        DialogEngine engine(backend, rc);
        for (const auto& r : evaluate(out.examples, engine, 2)) {
          EXPECT_NE(r.status, ExampleStatus::kErrored) << r.note;
          skipped += r.status == ExampleStatus::kSkipped ? 1 : 0;
        }
      }
    }
  }
  RunConfig rf;
  rf.rationale_free = true;
  DialogEngine engine(backend, rf);
  evaluate(out.examples, engine, 1);
  EXPECT_EQ(backend.misses(), 0u);
  EXPECT_EQ(skipped, 12);
}

TEST(GenerateSyntheticFixture, BundledFilesMatchGenerator) {
  SynthConfig c;
  c.count = 20;
  c.mistakes = 10;
  c.seed = 7;
  c.signal = 0.5;
  c.content_filtered = 1;
  const auto out = generate_synthetic_fixture(c);
  const auto dir = std::filesystem::path(PMD_DATA_DIR) / "synthetic";
  EXPECT_EQ(read_text_file(dir / "dataset.jsonl"), out.dataset_jsonl);
  EXPECT_TRUE(read_text_file(dir / "fixture.json") == out.fixture_json);
}

TEST(SyntheticBackend, UnknownFrameIsBackendFailure) {
  SynthConfig c;
  c.count = 2;
  c.mistakes = 1;
  SyntheticBackend b(c, synthetic_examples(c));
  EXPECT_THROW(b.answer_yes_probability("Is it?", "frames/unknown.jpg"), BackendUnavailable);
}

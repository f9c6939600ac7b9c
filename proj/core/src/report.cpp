#include "pmd/report.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "pmd/errors.hpp"
#include "pmd/util.hpp"

namespace pmd {

using ordered_json = nlohmann::ordered_json;

namespace {

std::optional<double> sorted_mean(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  return total / static_cast<double>(values.size());
}

double r9(double v) { return round_significant(v, 9); }

std::optional<double> r9(const std::optional<double>& v) {
  if (!v) return std::nullopt;
  return r9(*v);
}

ordered_json opt(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> opt_real(const ordered_json& j, const char* field) {
  if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
  return j.at(field).get<double>();
}

ordered_json candidate_json(const RankedCandidate& rc) {
  ordered_json j;
  j["rank"] = rc.rank;
  j["text"] = rc.candidate.text;
  j["score"] = rc.score;
  j["score_kind"] = to_string(rc.score_kind);
  j["log_likelihood"] = rc.candidate.log_likelihood;
  j["token_count"] = rc.candidate.token_count;
  j["source"] = to_string(rc.candidate.source);
  j["unconstrained"] = rc.candidate.unconstrained;
  j["surface_valid"] = rc.surface_valid;
  return j;
}

RankedCandidate candidate_from(const ordered_json& j) {
  RankedCandidate rc;
  rc.rank = j.at("rank").get<int>();
  rc.candidate.text = j.at("text").get<std::string>();
  rc.score = j.at("score").get<double>();
  rc.score_kind = parse_ranking_mode(j.at("score_kind").get<std::string>());
  rc.candidate.log_likelihood = j.at("log_likelihood").get<double>();
  rc.candidate.token_count = j.at("token_count").get<int>();
  rc.candidate.source = parse_candidate_source(j.at("source").get<std::string>());
  rc.candidate.unconstrained = j.at("unconstrained").get<bool>();
  rc.surface_valid = j.at("surface_valid").get<bool>();
  return rc;
}

}  // namespace

std::string format_real(double v) { return ordered_json(v).dump(); }

RunSummary summarize(std::span<const ExampleResult> results) {
  RunSummary s;
  std::vector<double> correct;
  std::vector<double> relevance;
  std::vector<double> informativeness;
  std::vector<double> iterations;
  std::vector<double> gain;
  for (const auto& r : results) {
    switch (r.status) {
      case ExampleStatus::kSkipped:
        ++s.counts.skipped;
        continue;
      case ExampleStatus::kErrored:
        ++s.counts.errored;
        continue;
      case ExampleStatus::kOk:
        break;
    }
    ++s.counts.evaluated;
    correct.push_back(r.correct() ? 1.0 : 0.0);
    iterations.push_back(r.metrics.iterations);
    gain.push_back(r.metrics.information_gain);
    if (r.metrics.example_relevance) relevance.push_back(*r.metrics.example_relevance);
    if (r.metrics.example_informativeness) {
      informativeness.push_back(*r.metrics.example_informativeness);
    }
    if (!r.metrics.example_relevance || !r.metrics.example_informativeness) ++s.counts.null_metric;
  }
  s.accuracy = sorted_mean(std::move(correct));
  s.mean_example_relevance = sorted_mean(std::move(relevance));
  s.mean_example_informativeness = sorted_mean(std::move(informativeness));
  s.mean_iterations = sorted_mean(std::move(iterations));
  s.mean_information_gain = sorted_mean(std::move(gain));
  return s;
}

ExampleResult rounded(const ExampleResult& result) {
  ExampleResult r = result;
  r.state.mistake_likelihood_final = r9(r.state.mistake_likelihood_final);
  for (double& p : r.state.success_likelihoods) p = r9(p);
  for (auto& t : r.state.turns) t.answer.yes_probability = r9(t.answer.yes_probability);
  for (auto& m : r.turn_metrics) {
    m.relevance = r9(m.relevance);
    m.informativeness = r9(m.informativeness);
    m.ref_adjusted_informativeness = r9(m.ref_adjusted_informativeness);
    m.nli_success_prob = r9(m.nli_success_prob);
  }
  r.metrics.example_relevance = r9(r.metrics.example_relevance);
  r.metrics.example_informativeness = r9(r.metrics.example_informativeness);
  r.metrics.decision_error = r9(r.metrics.decision_error);
  r.metrics.information_gain = r9(r.metrics.information_gain);
  for (auto& rec : r.turn_records) {
    for (auto& c : rec.ranked) {
      c.score = r9(c.score);
      c.candidate.log_likelihood = r9(c.candidate.log_likelihood);
    }
  }
  return r;
}

std::string result_to_json(const ExampleResult& result) {
  const ExampleResult r = rounded(result);
  const bool ok = r.status == ExampleStatus::kOk;
  ordered_json j;
  j["id"] = r.id;
  j["status"] = to_string(r.status);
  j["note"] = r.note;
  j["label"] = to_string(r.label);
  j["mistake_type"] = to_string(r.mistake_type);
  j["ranking_mode"] = to_string(r.ranking_mode);
  j["decision"] = ok ? ordered_json(to_string(r.state.decision)) : ordered_json(nullptr);
  j["mistake_likelihood_final"] =
      ok ? ordered_json(r.state.mistake_likelihood_final) : ordered_json(nullptr);
  j["stop_reason"] = ok ? ordered_json(to_string(r.state.stop_reason)) : ordered_json(nullptr);
  j["success_likelihoods"] = r.state.success_likelihoods;

  ordered_json turns = ordered_json::array();
  for (std::size_t i = 0; i < r.state.turns.size(); ++i) {
    const DialogTurn& t = r.state.turns[i];
    ordered_json tj;
    tj["iteration_index"] = t.iteration_index;
    tj["question"] = t.question;
    tj["answer"] = to_string(t.answer.value);
    tj["yes_probability"] = t.answer.yes_probability;
    if (i < r.turn_metrics.size()) {
      const TurnMetrics& m = r.turn_metrics[i];
      tj["relevance"] = m.relevance;
      tj["informativeness"] = opt(m.informativeness);
      tj["ref_adjusted_informativeness"] = opt(m.ref_adjusted_informativeness);
      tj["nli_success_prob"] = opt(m.nli_success_prob);
    }
    if (i < r.turn_records.size()) {
      tj["vqg_prompt"] = r.turn_records[i].vqg_prompt;
      ordered_json cands = ordered_json::array();
      for (const auto& c : r.turn_records[i].ranked) cands.push_back(candidate_json(c));
      tj["candidates"] = std::move(cands);
    }
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);

  ordered_json m;
  if (ok) {
    m["example_relevance"] = opt(r.metrics.example_relevance);
    m["example_informativeness"] = opt(r.metrics.example_informativeness);
    m["decision_error"] = r.metrics.decision_error;
    m["iterations"] = r.metrics.iterations;
    m["information_gain"] = r.metrics.information_gain;
  }
  j["metrics"] = ok ? std::move(m) : ordered_json(nullptr);
  return j.dump();
}

ExampleResult result_from_json(std::string_view line) {
  try {
    const ordered_json j = ordered_json::parse(line);
    ExampleResult r;
    r.id = j.at("id").get<std::string>();
    r.status = parse_example_status(j.at("status").get<std::string>());
    r.note = j.value("note", std::string());
    r.label = parse_label(j.at("label").get<std::string>());
    r.mistake_type = parse_mistake_type(j.at("mistake_type").get<std::string>());
    r.ranking_mode = parse_ranking_mode(j.at("ranking_mode").get<std::string>());
    r.state.example_id = r.id;
    if (!j.at("decision").is_null()) r.state.decision = parse_label(j.at("decision").get<std::string>());
    if (auto p = opt_real(j, "mistake_likelihood_final")) r.state.mistake_likelihood_final = *p;
    if (!j.at("stop_reason").is_null()) {
      r.state.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    }
    r.state.success_likelihoods = j.at("success_likelihoods").get<std::vector<double>>();

    for (const auto& tj : j.at("turns")) {
      DialogTurn t;
      t.iteration_index = tj.at("iteration_index").get<int>();
      t.question = tj.at("question").get<std::string>();
      t.answer.value = parse_answer_value(tj.at("answer").get<std::string>());
      t.answer.yes_probability = tj.at("yes_probability").get<double>();
      r.state.turns.push_back(std::move(t));
      if (tj.contains("relevance")) {
        TurnMetrics m;
        m.relevance = tj.at("relevance").get<double>();
        m.informativeness = opt_real(tj, "informativeness");
        m.ref_adjusted_informativeness = opt_real(tj, "ref_adjusted_informativeness");
        m.nli_success_prob = opt_real(tj, "nli_success_prob");
        r.turn_metrics.push_back(m);
      }
      if (tj.contains("candidates")) {
        TurnRecord rec;
        rec.iteration_index = r.state.turns.back().iteration_index;
        rec.vqg_prompt = tj.value("vqg_prompt", std::string());
        for (const auto& cj : tj.at("candidates")) rec.ranked.push_back(candidate_from(cj));
        r.turn_records.push_back(std::move(rec));
      }
    }

    const auto& m = j.at("metrics");
    if (!m.is_null()) {
      r.metrics.example_relevance = opt_real(m, "example_relevance");
      r.metrics.example_informativeness = opt_real(m, "example_informativeness");
      r.metrics.decision_error = m.at("decision_error").get<double>();
      r.metrics.iterations = m.at("iterations").get<int>();
      r.metrics.information_gain = m.at("information_gain").get<double>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed result record: ") + e.what());
  }
}

std::string results_to_jsonl(std::vector<ExampleResult> results) {
  std::sort(results.begin(), results.end(),
            [](const ExampleResult& a, const ExampleResult& b) { return a.id < b.id; });
  std::string out;
  for (const auto& r : results) {
    out += result_to_json(r);
    out.push_back('\n');
  }
  return out;
}

std::vector<ExampleResult> results_from_jsonl(std::string_view text) {
  std::vector<ExampleResult> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(result_from_json(line));
    } catch (const std::exception& e) {
      throw ValidationError("results line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string summary_to_json(const RunSummary& s) {
  ordered_json j;
  j["accuracy"] = opt(s.accuracy);
  j["mean_example_relevance"] = opt(s.mean_example_relevance);
  j["mean_example_informativeness"] = opt(s.mean_example_informativeness);
  j["mean_iterations"] = opt(s.mean_iterations);
  j["mean_information_gain"] = opt(s.mean_information_gain);
  j["counts"] = {{"evaluated", s.counts.evaluated},
                 {"skipped", s.counts.skipped},
                 {"errored", s.counts.errored},
                 {"null_metric", s.counts.null_metric}};
  return j.dump(2) + "\n";
}

std::string scatter_csv(std::span<const ExampleResult> results) {
  std::string out(kScatterHeader);
  out.push_back('\n');
  auto cell = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  for (const auto& raw : results) {
    if (raw.status != ExampleStatus::kOk) continue;
    const ExampleResult r = rounded(raw);
    out += r.id;
    out += ',' + format_real(r.metrics.decision_error);
    out += ',' + cell(r.metrics.example_relevance);
    out += ',' + cell(r.metrics.example_informativeness);
    out += ',' + std::string(to_string(r.state.decision));
    out += ',' + std::string(to_string(r.label));
    out += ',' + std::string(to_string(r.state.stop_reason));
    out.push_back('\n');
  }
  return out;
}

std::string det_csv(std::span<const DetPoint> points) {
  std::string out = "tau,miss_rate,false_alarm_rate\n";
  for (const auto& p : points) {
    out += format_real(p.tau);
    out += ',' + (p.miss_rate ? format_real(r9(*p.miss_rate)) : std::string());
    out += ',' + (p.false_alarm_rate ? format_real(r9(*p.false_alarm_rate)) : std::string());
    out.push_back('\n');
  }
  return out;
}

std::string tau_report_json(const TauChoice& choice, std::span<const ScoredDecision> results) {
  ordered_json j;
  j["best_tau"] = choice.tau;
  j["accuracy"] = r9(choice.accuracy);
  ordered_json grid = ordered_json::array();
  for (double tau : tau_grid()) {
    grid.push_back({{"tau", tau}, {"accuracy", r9(accuracy_at(results, tau))}});
  }
  j["grid"] = std::move(grid);
  return j.dump(2) + "\n";
}

std::string tuning_report_json(const TuneResult& result) {
  ordered_json j;
  j["best_tau"] = result.best_tau;
  j["best_delta"] = result.best_delta;
  j["best_epsilon"] = result.best_epsilon;
  j["objective_value"] = r9(result.objective_value);
  ordered_json trace = ordered_json::array();
  for (const auto& c : result.grid_trace) {
    trace.push_back({{"delta", c.delta},
                     {"epsilon", c.epsilon},
                     {"tau", c.tau},
                     {"accuracy", r9(c.accuracy)},
                     {"objective", r9(c.objective)},
                     {"mean_iterations", r9(c.mean_iterations)}});
  }
  j["grid_trace"] = std::move(trace);
  return j.dump(2) + "\n";
}

}  // namespace pmd

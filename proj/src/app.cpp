#include "cifrank/app.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cifrank/counterfactual.hpp"
#include "cifrank/error.hpp"
#include "cifrank/hash.hpp"
#include "cifrank/metrics.hpp"
#include "cifrank/random.hpp"

namespace cifrank {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw ConfigError("cannot create directory '" +
                        path.parent_path().string() + "': " + ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

std::string csv_text(const Dataset& data) {
  std::ostringstream out;
  write_csv(data, out);
  return out.str();
}

fs::path sidecar(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return p.parent_path() / (p.stem().string() + suffix);
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

Ranking load_ranking(const std::string& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ranking '" + path + "'");
  return read_ranking_csv(in, data);
}

std::string ranking_csv(const Ranking& ranking, const Dataset& observed,
                        const std::string& outcome,
                        std::span<const double> scores,
                        std::span<const std::string> sensitive) {
  std::ostringstream out;
  write_ranking_csv(out, ranking, observed, outcome, scores, sensitive);
  return out.str();
}

std::string reports_csv(std::span<const MetricReport> reports) {
  std::ostringstream out;
  write_report_csv(out, reports);
  return out.str();
}

void check_k_values(const std::vector<std::size_t>& ks, std::size_t n) {
  if (ks.empty()) throw ConfigError("at least one k value is required");
  for (std::size_t k : ks) {
    if (k == 0 || k > n) {
      throw ConfigError("k=" + std::to_string(k) + " is outside [1, " +
                        std::to_string(n) + "]");
    }
  }
}

// Runs fn(i) for i in [0, count) on a small pool; the first failure in index
// order is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

LtrSettings ltr_from_json(const json& doc, LtrSettings ltr) {
  if (doc.contains("variants")) {
    ltr.variants.clear();
    for (const auto& v : doc.at("variants")) {
      ltr.variants.push_back(parse_pipeline_variant(v.get<std::string>()));
    }
  }
  if (doc.contains("split_count")) {
    const auto c = doc.at("split_count").get<long long>();
    if (c < 1) throw ConfigError("split_count must be at least 1");
    ltr.split_count = static_cast<std::size_t>(c);
  }
  ltr.split_fraction = doc.value("split_fraction", ltr.split_fraction);
  if (doc.contains("k")) ltr.k_values = doc.at("k").get<std::vector<std::size_t>>();
  if (doc.contains("learning_rate")) {
    ltr.hyperparams.learning_rate = doc.at("learning_rate").get<double>();
  }
  if (doc.contains("epochs")) ltr.hyperparams.epochs = doc.at("epochs").get<std::size_t>();
  if (doc.contains("tolerance")) {
    ltr.hyperparams.tolerance = doc.at("tolerance").get<double>();
  }
  ltr.include_sensitive_features =
      doc.value("include_sensitive_features", ltr.include_sensitive_features);
  ltr.n_train = doc.value("n_train", ltr.n_train);
  ltr.n_test = doc.value("n_test", ltr.n_test);
  ltr.workers = doc.value("workers", ltr.workers);
  return ltr;
}

}  // namespace

CausalModelSpec ExperimentConfig::effective_spec() const {
  CausalModelSpec out = spec;
  for (const auto& [name, flag] : resolving) out.resolving[name] = flag;
  return out;
}

GroupKey ExperimentConfig::baseline_key() const {
  if (!baseline) return default_baseline(spec);
  return parse_group_key(*baseline, spec.sensitive);
}

std::string ExperimentConfig::outcome() const {
  const auto name = spec.outcome();
  if (!name) throw ConfigError("model has no outcome variable");
  return *name;
}

std::string ExperimentConfig::quota() const {
  if (quota_attribute) return *quota_attribute;
  if (spec.sensitive.empty()) throw ConfigError("model has no sensitive attribute");
  return spec.sensitive.back();
}

ExperimentConfig preset_experiment(const std::string& name) {
  ExperimentConfig cfg;
  cfg.synth = preset(name);
  cfg.spec = moving_company_model(false);
  return cfg;
}

ExperimentConfig experiment_from_json(const json& doc,
                                      const std::string& base_dir) {
  ExperimentConfig cfg;
  if (!doc.is_object()) throw ConfigError("experiment config must be an object");
  try {
    if (!doc.contains("dataset")) throw ConfigError("config has no 'dataset'");
    const json& ds = doc.at("dataset");
    if (ds.contains("csv")) {
      cfg.csv_path = resolve(base_dir, ds.at("csv").get<std::string>());
    } else {
      cfg.synth = synth_config_from_json(ds);
    }
    if (doc.contains("model")) {
      const json& m = doc.at("model");
      cfg.spec = m.is_string()
                     ? load_spec(resolve(base_dir, m.get<std::string>()))
                     : spec_from_json(m);
    } else if (cfg.synth) {
      cfg.spec = moving_company_model(false);
    } else {
      throw ConfigError("a CSV dataset needs a 'model'");
    }
    if (doc.contains("baseline")) cfg.baseline = doc.at("baseline").get<std::string>();
    if (doc.contains("resolving")) {
      cfg.resolving = doc.at("resolving").get<std::map<std::string, bool>>();
    }
    if (doc.contains("k")) cfg.k_values = doc.at("k").get<std::vector<std::size_t>>();
    if (doc.contains("direction")) {
      cfg.direction = parse_direction(doc.at("direction").get<std::string>());
    }
    if (doc.contains("quota_attribute")) {
      cfg.quota_attribute = doc.at("quota_attribute").get<std::string>();
    }
    cfg.rkl_step = doc.value("rkl_step", cfg.rkl_step);
    if (doc.contains("seed")) {
      cfg.seed = doc.at("seed").get<std::uint64_t>();
      cfg.has_seed = true;
    }
    if (doc.contains("ltr")) cfg.ltr = ltr_from_json(doc.at("ltr"), cfg.ltr);
    if (doc.contains("out")) cfg.out_dir = resolve(base_dir, doc.at("out").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (cfg.baseline) cfg.baseline_key();
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  const json doc = read_json_file(path);
  return experiment_from_json(doc, fs::path(path).parent_path().string());
}

void apply_resolving_flag(ExperimentConfig& cfg, const std::string& flag) {
  if (flag == "all" || flag == "none") {
    const auto marked = with_resolving(cfg.spec, flag == "all");
    for (const auto& [name, value] : marked.resolving) cfg.resolving[name] = value;
    return;
  }
  const auto eq = flag.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--resolving expects NAME=true|false, all or none");
  }
  const std::string name = flag.substr(0, eq);
  const std::string value = flag.substr(eq + 1);
  if (value == "true" || value == "1") {
    cfg.resolving[name] = true;
  } else if (value == "false" || value == "0") {
    cfg.resolving[name] = false;
  } else {
    throw ConfigError("--resolving value for '" + name + "' must be true or false");
  }
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.synth) {
    SynthConfig synth = *cfg.synth;
    synth.seed = cfg.seed;
    return generate(synth);
  }
  if (cfg.csv_path.empty()) throw ConfigError("no dataset configured");
  return load_csv(cfg.csv_path, Schema::from_model(cfg.spec));
}

std::string dataset_hash(const Dataset& data) { return hex_digest(csv_text(data)); }

void cmd_generate(const SynthConfig& synth, const std::string& out_csv) {
  const Dataset data = generate(synth);
  write_text(out_csv, csv_text(data));
  write_json(sidecar(out_csv, ".config.json"), to_json(synth));
}

void cmd_fit(const ExperimentConfig& cfg, const std::string& out_json) {
  const Dataset data = load_dataset(cfg);
  const FittedModel model = fit_model(data, cfg.effective_spec());
  write_json(out_json, to_json(model));
}

void cmd_transform(const ExperimentConfig& cfg, const std::string& fitted_path,
                   const std::string& out_csv) {
  const Dataset data = load_dataset(cfg);
  FittedModel model;
  ResidualSource source = ResidualSource::kStored;
  if (fitted_path.empty()) {
    model = fit_model(data, cfg.effective_spec());
  } else {
    model = load_fitted_model(fitted_path);
    if (!cfg.resolving.empty()) {
      for (const auto& [name, flag] : cfg.resolving) model.spec.resolving[name] = flag;
      const auto check = validate(model.spec);
      if (!check.ok()) throw ConfigError(check.summary());
    }
    source = ResidualSource::kRecomputed;
  }
  CounterfactualConfig cf{cfg.baseline_key(), model, source};
  const Dataset out = transform_dataset(data, cf);
  write_text(out_csv, csv_text(out));
  write_json(sidecar(out_csv, ".provenance.json"),
             provenance(cf, dataset_hash(data)));
}

void cmd_rank(const ExperimentConfig& cfg, const std::string& score_column,
              std::optional<std::size_t> quota_k, const std::string& out_csv) {
  const Dataset data = load_dataset(cfg);
  const std::string column = score_column.empty() ? cfg.outcome() : score_column;
  if (!data.schema().index_of(column)) {
    throw DataError("score column '" + column + "' is not in the data");
  }
  const Ranking ranking =
      quota_k ? quota_ranking(data, column, cfg.quota(), *quota_k,
                              cfg.direction, cfg.seed)
              : rank_by_score(data, column, cfg.direction, cfg.seed);
  const auto scores = data.column(column);
  write_text(out_csv, ranking_csv(ranking, data, cfg.outcome(), scores,
                                  cfg.spec.sensitive));
}

void cmd_evaluate(const ExperimentConfig& cfg, const std::string& ranking_path,
                  const std::string& original_path,
                  const std::string& truth_path, const std::string& out_dir) {
  const Dataset data = load_dataset(cfg);
  check_k_values(cfg.k_values, data.size());
  const Ranking proposed = load_ranking(ranking_path, data);
  std::optional<Ranking> original;
  std::optional<Ranking> truth;
  if (!original_path.empty()) original = load_ranking(original_path, data);
  if (!truth_path.empty()) truth = load_ranking(truth_path, data);

  EvaluationInputs inputs;
  inputs.data = &data;
  inputs.score_column = cfg.outcome();
  inputs.sensitive = cfg.spec.sensitive;
  inputs.k_values = cfg.k_values;
  inputs.rkl_step = cfg.rkl_step;
  inputs.original = original ? &*original : nullptr;
  inputs.ground_truth = truth ? &*truth : nullptr;
  const std::vector<MetricReport> reports{evaluate(proposed, inputs, "proposed")};
  write_json(fs::path(out_dir) / "report.json",
             {{"input_hash", dataset_hash(data)}, {"reports", {to_json(reports[0])}}});
  write_text(fs::path(out_dir) / "report.csv", reports_csv(reports));
}

void cmd_run(const ExperimentConfig& cfg) {
  const fs::path out(cfg.out_dir);
  const Dataset data = load_dataset(cfg);
  check_k_values(cfg.k_values, data.size());
  const CausalModelSpec spec = cfg.effective_spec();
  const std::string outcome = cfg.outcome();
  const GroupKey baseline = cfg.baseline_key();
  const std::string input_hash = dataset_hash(data);
  write_text(out / "data.csv", csv_text(data));

  const FittedModel model = fit_model(data, spec);
  write_json(out / "fitted_model.json", to_json(model));

  const CounterfactualConfig cf{baseline, model, ResidualSource::kStored};
  const std::string cf_input = dataset_hash(data);
  const Dataset counterfactual = transform_dataset(data, cf);
  write_text(out / "counterfactual.csv", csv_text(counterfactual));
  write_json(out / "counterfactual.provenance.json", provenance(cf, cf_input));

  const Ranking observed = rank_by_score(data, outcome, cfg.direction, cfg.seed);
  const Ranking fair =
      rank_by_score(counterfactual, outcome, cfg.direction, cfg.seed);
  write_text(out / "ranking_original.csv",
             ranking_csv(observed, data, outcome, data.column(outcome),
                         spec.sensitive));
  write_text(out / "ranking_counterfactual.csv",
             ranking_csv(fair, data, outcome, counterfactual.column(outcome),
                         spec.sensitive));

  EvaluationInputs inputs;
  inputs.data = &data;
  inputs.score_column = outcome;
  inputs.sensitive = spec.sensitive;
  inputs.k_values = cfg.k_values;
  inputs.rkl_step = cfg.rkl_step;
  inputs.original = &observed;

  std::vector<MetricReport> reports;
  reports.push_back(evaluate(observed, inputs, "original"));
  reports.push_back(evaluate(fair, inputs, "counterfactual"));

  const std::string quota_attr = cfg.quota();
  const std::string quota_input = dataset_hash(data);
  MetricReport quota_report;
  quota_report.label = "quota";
  for (std::size_t k : cfg.k_values) {
    const Ranking prefix =
        quota_ranking(data, outcome, quota_attr, k, cfg.direction, cfg.seed);
    write_text(out / ("ranking_quota_k" + std::to_string(k) + ".csv"),
               ranking_csv(prefix, data, outcome, data.column(outcome),
                           spec.sensitive));
    EvaluationInputs single = inputs;
    single.k_values = {k};
    merge_k(quota_report, evaluate(prefix, single, "quota"), k);
  }
  reports.push_back(std::move(quota_report));

  json doc;
  doc["input_hash"] = input_hash;
  doc["reports"] = json::array();
  for (const auto& r : reports) doc["reports"].push_back(to_json(r));
  write_json(out / "report.json", doc);
  write_text(out / "report.csv", reports_csv(reports));

  if (cf_input != input_hash || quota_input != input_hash) {
    throw DataError("run inputs diverged between treatments");
  }
  write_json(out / "run.provenance.json",
             {{"seed", cfg.seed},
              {"baseline", baseline.label()},
              {"model_hash", hex_digest(canonical_text(model))},
              {"input_hash", input_hash},
              {"consumed",
               {{"counterfactual", cf_input}, {"quota", quota_input}}}});
}

void cmd_ltr(const ExperimentConfig& cfg) {
  const LtrSettings& ltr = cfg.ltr;
  if (ltr.variants.empty()) throw ConfigError("no pipeline variants requested");
  if (ltr.split_count < 1) throw ConfigError("split count must be at least 1");
  const CausalModelSpec spec = cfg.effective_spec();

  std::vector<std::pair<Dataset, Dataset>> splits;
  if (cfg.synth) {
    for (std::size_t s = 0; s < ltr.split_count; ++s) {
      SynthConfig train_cfg = *cfg.synth;
      train_cfg.n = ltr.n_train;
      train_cfg.seed = derive_seed(cfg.seed, 2 * s);
      SynthConfig test_cfg = *cfg.synth;
      test_cfg.n = ltr.n_test;
      test_cfg.seed = derive_seed(cfg.seed, 2 * s + 1);
      splits.emplace_back(generate(train_cfg), generate(test_cfg));
    }
  } else {
    const Dataset data = load_dataset(cfg);
    for (std::size_t s = 0; s < ltr.split_count; ++s) {
      splits.push_back(split_dataset(data, ltr.split_fraction,
                                     derive_seed(cfg.seed, 2 * s)));
    }
  }
  for (const auto& [train, test] : splits) check_k_values(ltr.k_values, test.size());

  const std::size_t nv = ltr.variants.size();
  std::vector<PipelineResult> results(ltr.split_count * nv);
  parallel_for(results.size(), ltr.workers, [&](std::size_t job) {
    const std::size_t s = job / nv;
    PipelineConfig pc;
    pc.variant = ltr.variants[job % nv];
    pc.split_fraction = ltr.split_fraction;
    pc.split_count = ltr.split_count;
    pc.seed = derive_seed(cfg.seed, 1000 + s);
    pc.k_values = ltr.k_values;
    pc.hyperparams = ltr.hyperparams;
    pc.include_sensitive_features = ltr.include_sensitive_features;
    pc.baseline = cfg.baseline_key();
    results[job] = run_pipeline(splits[s].first, splits[s].second, spec, pc);
  });

  const fs::path out(cfg.out_dir);
  std::vector<MetricReport> all;
  json summary = json::object();
  std::ostringstream summary_csv;
  summary_csv << "variant,metric,group,k,count,mean,stddev\n";
  for (std::size_t v = 0; v < nv; ++v) {
    const std::string variant(to_string(ltr.variants[v]));
    std::vector<MetricReport> per_variant;
    for (std::size_t s = 0; s < ltr.split_count; ++s) {
      const PipelineResult& r = results[s * nv + v];
      char split_dir[32];
      std::snprintf(split_dir, sizeof(split_dir), "split_%02zu", s);
      write_json(out / "ltr" / split_dir / (variant + ".json"),
                 {{"variant", variant},
                  {"split", s},
                  {"train_hash", dataset_hash(splits[s].first)},
                  {"test_hash", dataset_hash(splits[s].second)},
                  {"model", to_json(r.model)},
                  {"report", to_json(r.report)}});
      MetricReport labelled = r.report;
      labelled.label = variant + "/" + split_dir;
      all.push_back(std::move(labelled));
      per_variant.push_back(r.report);
    }
    const auto rows = summarize(per_variant);
    summary[variant] = to_json(rows);
    for (const auto& row : rows) {
      summary_csv << variant << ',' << row.metric << ",\"" << row.group << "\","
                  << row.k << ',' << row.count << ',' << format_double(row.mean)
                  << ',' << (row.stddev ? format_double(*row.stddev) : "NA")
                  << '\n';
    }
  }
  write_json(out / "ltr_summary.json", summary);
  write_text(out / "ltr_summary.csv", summary_csv.str());
  write_text(out / "ltr_reports.csv", reports_csv(all));
}

}  // namespace cifrank

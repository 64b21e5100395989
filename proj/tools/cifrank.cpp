#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cifrank/app.hpp"
#include "cifrank/error.hpp"
#include "cifrank/synthgen.hpp"

namespace {

struct Options {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> k;
  std::string baseline;
  std::vector<std::string> resolving;
  std::string out;
  std::string data;
  std::string model;
  std::string fitted;
  std::string score;
  std::string direction;
  std::optional<std::size_t> quota_k;
  std::string quota_attribute;
  std::string ranking;
  std::string original;
  std::string truth;
  std::optional<std::size_t> n;
  std::vector<std::string> variants;
  std::optional<std::size_t> splits;
  std::optional<std::size_t> workers;
};

std::optional<std::uint64_t> env_seed() {
  const char* text = std::getenv("CIFRANK_SEED");
  if (text == nullptr || *text == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(text, &end, 10);
  if (*end != '\0' || text[0] == '-') {
    throw cifrank::ConfigError("CIFRANK_SEED must be a non-negative integer");
  }
  return value;
}

std::uint64_t pick_seed(const Options& opt, bool config_has_seed,
                        std::uint64_t config_seed) {
  if (opt.seed) return *opt.seed;
  if (config_has_seed) return config_seed;
  if (auto env = env_seed()) return *env;
  return 0;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cifrank::ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw cifrank::ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

cifrank::ExperimentConfig experiment(const Options& opt) {
  cifrank::ExperimentConfig cfg;
  if (!opt.config.empty()) {
    cfg = cifrank::load_experiment(opt.config);
  } else if (!opt.preset.empty()) {
    cfg = cifrank::preset_experiment(opt.preset);
  } else if (opt.data.empty()) {
    throw cifrank::ConfigError("one of --config, --preset or --data is required");
  }
  if (!opt.model.empty()) cfg.spec = cifrank::load_spec(opt.model);
  if (!opt.data.empty()) {
    if (cfg.spec.vertices.empty()) {
      throw cifrank::ConfigError("--data needs a model (--model or --config)");
    }
    cfg.synth.reset();
    cfg.csv_path = opt.data;
  }
  if (opt.n) {
    if (!cfg.synth) throw cifrank::ConfigError("--n only applies to synthetic data");
    cfg.synth->n = *opt.n;
    cfg.synth->validate();
  }
  cfg.seed = pick_seed(opt, cfg.has_seed, cfg.seed);
  cfg.has_seed = true;
  if (!opt.k.empty()) cfg.k_values = opt.k;
  if (!opt.baseline.empty()) cfg.baseline = opt.baseline;
  for (const auto& flag : opt.resolving) cifrank::apply_resolving_flag(cfg, flag);
  if (!opt.direction.empty()) cfg.direction = cifrank::parse_direction(opt.direction);
  if (!opt.quota_attribute.empty()) cfg.quota_attribute = opt.quota_attribute;
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (!opt.variants.empty()) {
    cfg.ltr.variants.clear();
    for (const auto& v : opt.variants) {
      cfg.ltr.variants.push_back(cifrank::parse_pipeline_variant(v));
    }
  }
  if (opt.splits) cfg.ltr.split_count = *opt.splits;
  if (opt.workers) cfg.ltr.workers = *opt.workers;
  cfg.baseline_key();
  return cfg;
}

std::string require_out(const Options& opt) {
  if (opt.out.empty()) throw cifrank::ConfigError("--out is required");
  return opt.out;
}

void generate(const Options& opt) {
  cifrank::SynthConfig synth;
  bool has_seed = false;
  if (!opt.config.empty()) {
    const auto doc = read_json(opt.config);
    const auto& ds = doc.contains("dataset") ? doc.at("dataset") : doc;
    if (ds.contains("csv")) {
      throw cifrank::ConfigError("generate needs a synthetic dataset config");
    }
    synth = cifrank::synth_config_from_json(ds);
    has_seed = ds.contains("seed") || doc.contains("seed");
    if (doc.contains("seed")) synth.seed = doc.at("seed").get<std::uint64_t>();
  } else if (!opt.preset.empty()) {
    synth = cifrank::preset(opt.preset);
  } else {
    throw cifrank::ConfigError("generate needs --preset or --config");
  }
  if (opt.n) synth.n = *opt.n;
  synth.seed = pick_seed(opt, has_seed, synth.seed);
  cifrank::cmd_generate(synth, require_out(opt));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactually fair ranking over structural causal models"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Experiment config (JSON)");
    sub->add_option("--preset", opt.preset, "Synthetic preset: moving, moving_r, moving_bm");
    sub->add_option("--seed", opt.seed, "Seed (falls back to CIFRANK_SEED)");
    sub->add_option("--out", opt.out, "Output path");
  };
  auto data_flags = [&](CLI::App* sub) {
    sub->add_option("--data", opt.data, "CSV dataset (overrides the config)");
    sub->add_option("--model", opt.model, "Causal model spec (JSON)");
    sub->add_option("--n", opt.n, "Synthetic sample size");
    sub->add_option("--baseline", opt.baseline, "Baseline group, e.g. G=0,R=0");
    sub->add_option("--resolving", opt.resolving,
                    "NAME=true|false, all or none (repeatable)");
  };
  auto k_flag = [&](CLI::App* sub) {
    sub->add_option("--k", opt.k, "k values, comma separated")->delimiter(',');
  };

  auto* gen = app.add_subcommand("generate", "Draw a synthetic dataset");
  common(gen);
  gen->add_option("--n", opt.n, "Sample size");

  auto* fit = app.add_subcommand("fit", "Fit the structural equations");
  common(fit);
  data_flags(fit);

  auto* transform = app.add_subcommand("transform", "Counterfactual dataset");
  common(transform);
  data_flags(transform);
  transform->add_option("--fitted", opt.fitted, "Saved fitted model (JSON)");

  auto* rank = app.add_subcommand("rank", "Rank a dataset by a score column");
  common(rank);
  data_flags(rank);
  rank->add_option("--score", opt.score, "Score column (default: outcome)");
  rank->add_option("--direction", opt.direction, "descending or ascending");
  rank->add_option("--quota-k", opt.quota_k, "Emit the quota ranking of this length");
  rank->add_option("--quota-attribute", opt.quota_attribute, "Quota attribute");

  auto* evaluate = app.add_subcommand("evaluate", "Metrics for a ranking");
  common(evaluate);
  data_flags(evaluate);
  k_flag(evaluate);
  evaluate->add_option("--ranking", opt.ranking, "Ranking CSV to evaluate")->required();
  evaluate->add_option("--original", opt.original, "Reference ranking for utility loss");
  evaluate->add_option("--truth", opt.truth, "Ground-truth ranking for EO and AP");

  auto* run = app.add_subcommand("run", "Fit, transform, rank and evaluate");
  common(run);
  data_flags(run);
  k_flag(run);
  run->add_option("--direction", opt.direction, "descending or ascending");
  run->add_option("--quota-attribute", opt.quota_attribute, "Quota attribute");

  auto* ltr = app.add_subcommand("ltr", "Learning-to-rank pipelines");
  common(ltr);
  data_flags(ltr);
  k_flag(ltr);
  ltr->add_option("--variants", opt.variants, "Pipeline variants, comma separated")
      ->delimiter(',');
  ltr->add_option("--splits", opt.splits, "Number of train/test splits");
  ltr->add_option("--workers", opt.workers, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      generate(opt);
    } else if (fit->parsed()) {
      cifrank::cmd_fit(experiment(opt), require_out(opt));
    } else if (transform->parsed()) {
      cifrank::cmd_transform(experiment(opt), opt.fitted, require_out(opt));
    } else if (rank->parsed()) {
      cifrank::cmd_rank(experiment(opt), opt.score, opt.quota_k, require_out(opt));
    } else if (evaluate->parsed()) {
      cifrank::cmd_evaluate(experiment(opt), opt.ranking, opt.original, opt.truth,
                            require_out(opt));
    } else if (run->parsed()) {
      cifrank::cmd_run(experiment(opt));
    } else if (ltr->parsed()) {
      auto cfg = experiment(opt);
      if (!opt.k.empty()) cfg.ltr.k_values = opt.k;
      cifrank::cmd_ltr(cfg);
    }
  } catch (const cifrank::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cifrank::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

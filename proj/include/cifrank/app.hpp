#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cifrank/dataset.hpp"
#include "cifrank/estimation.hpp"
#include "cifrank/group.hpp"
#include "cifrank/ltr.hpp"
#include "cifrank/ranking.hpp"
#include "cifrank/scm.hpp"
#include "cifrank/synthgen.hpp"

namespace cifrank {

struct LtrSettings {
  std::vector<PipelineVariant> variants = all_pipeline_variants();
  std::size_t split_count = 10;
  double split_fraction = 0.7;
  std::vector<std::size_t> k_values{500};
  Hyperparams hyperparams;
  bool include_sensitive_features = false;
  // Synthetic sources draw a fresh train and test set per split.
  std::size_t n_train = 2000;
  std::size_t n_test = 2000;
  // 0 means one per hardware thread.
  std::size_t workers = 0;
};

// Relative paths in a config file resolve against the file's directory.
struct ExperimentConfig {
  // Exactly one of synth / csv_path.
  std::optional<SynthConfig> synth;
  std::string csv_path;
  CausalModelSpec spec;
  std::optional<std::string> baseline;
  // Applied on top of the model's own flags.
  std::map<std::string, bool> resolving;
  std::vector<std::size_t> k_values{50, 100, 200};
  Direction direction = Direction::kDescending;
  // Defaults to the last sensitive attribute.
  std::optional<std::string> quota_attribute;
  std::size_t rkl_step = 10;
  std::uint64_t seed = 0;
  // Whether the seed was given explicitly rather than defaulted.
  bool has_seed = false;
  LtrSettings ltr;
  std::string out_dir = "out";

  // Model with resolving overrides applied.
  CausalModelSpec effective_spec() const;
  GroupKey baseline_key() const;
  std::string outcome() const;
  std::string quota() const;
};

// Starting point for `--preset`: the synthetic dataset with the moving
// company model.
ExperimentConfig preset_experiment(const std::string& name);

ExperimentConfig experiment_from_json(const nlohmann::json& doc,
                                      const std::string& base_dir = {});
ExperimentConfig load_experiment(const std::string& path);

// Resolving overrides: "X=true", "X=false", "all", "none".
void apply_resolving_flag(ExperimentConfig& cfg, const std::string& flag);

// Synthetic data uses cfg.seed.
Dataset load_dataset(const ExperimentConfig& cfg);

std::string dataset_hash(const Dataset& data);

// Writes the CSV and `<stem>.config.json` next to it.
void cmd_generate(const SynthConfig& synth, const std::string& out_csv);

void cmd_fit(const ExperimentConfig& cfg, const std::string& out_json);

// Fits on the fly (stored residuals) unless `fitted_path` names a saved model
// (recomputed residuals). Writes the CSV and `<stem>.provenance.json`.
void cmd_transform(const ExperimentConfig& cfg, const std::string& fitted_path,
                   const std::string& out_csv);

// Ranks by `score_column` (default: outcome). With quota_k, writes the quota
// prefix of that length instead.
void cmd_rank(const ExperimentConfig& cfg, const std::string& score_column,
              std::optional<std::size_t> quota_k, const std::string& out_csv);

// Reads ranking CSVs over the configured dataset and writes report.json and
// report.csv under `out_dir`.
void cmd_evaluate(const ExperimentConfig& cfg, const std::string& ranking_path,
                  const std::string& original_path,
                  const std::string& truth_path, const std::string& out_dir);

// generate/load -> fit -> transform -> rank (observed, counterfactual, quota)
// -> evaluate, all under cfg.out_dir.
void cmd_run(const ExperimentConfig& cfg);

// Every variant over every split, per-split reports plus summaries, under
// cfg.out_dir.
void cmd_ltr(const ExperimentConfig& cfg);

}  // namespace cifrank

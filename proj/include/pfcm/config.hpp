#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pfcm/cluster.hpp"
#include "pfcm/dataset.hpp"
#include "pfcm/personalization.hpp"

namespace pfcm {

// Everything that determines a run. Same resolved config, same outputs.
struct ExperimentConfig {
  std::string data_csv;  // empty -> synthetic source
  SyntheticSpec synth;
  int num_classes = 3;
  double split_fraction = 0.8;
  CnnSpec model;
  OptimizerConfig opt;
  FedConfig fed;
  struct Clustering {
    int rounds = 20;
    DistanceMetric metric = DistanceMetric::kCosine;
    Linkage linkage = Linkage::kAverage;
    CutCriterion cut_criterion;
    bool last_layer_only = false;
  } clustering;
  struct Personalization {
    int rounds = 0;  // P; 0 resolves to 5 * fed.local_epochs
    bool literal_similarity = false;
  } personalization;
  std::string out_dir = "out";
  std::uint64_t seed = 42;

  LabelScheme scheme() const {
    return LabelScheme{num_classes == 2 ? LabelMode::kTwoClass : LabelMode::kThreeClass};
  }
  PersonalizationConfig personalization_config() const;
};

// Flat `key = value` file; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig load_config_file(const std::filesystem::path& path);
void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value);

// Fills derived defaults and validates; call after file/flag merging.
void resolve_config(ExperimentConfig& config);

// Canonical serialization: sorted keys, shortest round-trip numbers. Parsing
// the output reproduces the config exactly.
std::string serialize_config(const ExperimentConfig& config);
void write_resolved_config(const ExperimentConfig& config, const std::filesystem::path& path);

CutCriterion parse_cut_criterion(const std::string& text);
std::string format_cut_criterion(const CutCriterion& c);

}  // namespace pfcm

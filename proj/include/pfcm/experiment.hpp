#pragma once

#include "pfcm/config.hpp"

namespace pfcm {

struct LoadedData {
  PreparedData data;
  std::vector<std::pair<std::string, int>> groups;  // synthetic ground truth, may be empty
};

// CSV ingestion or synthetic generation, followed by the shared pipeline
// (subject partition, split, normalization, preprocessing).
LoadedData load_experiment_data(const ExperimentConfig& config);

struct TrainResult {
  LoadedData loaded;
  GlobalModelState global;  // weights after the global FedAvg phase
  std::vector<RoundReport> fed_reports;
  Dendrogram dendrogram;
  std::vector<std::vector<int>> partition;
  std::vector<ClusterModel> clusters;
  std::vector<std::vector<RoundReport>> cluster_reports;
  std::vector<std::string> warnings;
};

// Global FedAvg, delta clustering and per-cluster training, all in memory.
TrainResult train_pipeline(const ExperimentConfig& config);

EvalReport evaluate_pfcm(const TrainResult& result, const ExperimentConfig& config);
// plain-FedAvg baseline: the post-phase-one global model on every test client
EvalReport evaluate_global_baseline(const TrainResult& result, const ExperimentConfig& config);

void cmd_synth(const ExperimentConfig& config);
void cmd_train(const ExperimentConfig& config);
void cmd_test(const ExperimentConfig& config);
void cmd_compare(const ExperimentConfig& config);

void write_eval_report(const EvalReport& report, const std::filesystem::path& dir,
                       const std::string& stem);

// full argument-level entry point; returns the process exit code
// (0 ok, 2 config/usage error, 3 data error, 4 runtime failure)
int cli_main(int argc, const char* const* argv);

}  // namespace pfcm

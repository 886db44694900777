#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfcm/cnn.hpp"
#include "pfcm/dataset.hpp"
#include "pfcm/optimizer.hpp"

namespace pfcm {

struct GlobalModelState {
  FlatWeights weights;
  int round = 0;
  double server_lr = 1.0;
};

struct ClientUpdate {
  std::string client_id;
  FlatWeights delta;  // locally trained weights minus the distributed weights
  std::size_t num_samples = 0;
};

struct RoundReport {
  int round = 0;
  double mean_train_loss = 0.0;  // mean loss of the distributed model on local data
  double probe_accuracy = 0.0;   // post-update accuracy on the participants' pooled data
  std::vector<std::pair<std::string, double>> client_losses;
};

struct FedConfig {
  int rounds = 50;
  int local_epochs = 1;
  double server_lr = 1.0;
  int batch_size = 0;            // 0 = full batch per epoch
  bool sample_weighted = false;  // plain 1/m averaging by default
  bool collect_reports = true;
};

// One round of local training from the given start weights with a fresh
// optimizer state; velocity is not carried across rounds.
FlatWeights train_on_client(const FlatWeights& start, const ClientDataset& client,
                            const CnnSpec& spec, int epochs, const OptimizerConfig& opt,
                            int batch_size = 0);

ClientUpdate local_train(const FlatWeights& global, const ClientDataset& client,
                         const CnnSpec& spec, int epochs, const OptimizerConfig& opt,
                         int batch_size = 0);

// Unweighted arithmetic mean of the deltas, summed in ascending client_id
// order for bit determinism; sample-count weighting behind the flag.
FlatWeights aggregate(std::span<const ClientUpdate> updates, bool sample_weighted = false);

// weights += server_lr * mean_delta; round += 1
void apply_update(GlobalModelState& state, const FlatWeights& mean_delta);

// FedAvg rounds over a fixed participant set; used both for the global phase
// and for per-cluster training. Does not set a data phase; callers do.
FlatWeights run_rounds(FlatWeights weights, std::span<const ClientDataset* const> clients,
                       const CnnSpec& spec, const OptimizerConfig& opt, const FedConfig& cfg,
                       int rounds, std::vector<RoundReport>* reports = nullptr,
                       int first_round = 1);

struct FedAvgResult {
  GlobalModelState global;
  std::vector<RoundReport> reports;
};

FedAvgResult run_fedavg(std::span<const ClientDataset> clients, const CnnSpec& spec,
                        const OptimizerConfig& opt, const FedConfig& cfg, std::uint64_t seed);

double dataset_accuracy(const FlatWeights& weights, const CnnSpec& spec,
                        std::span<const ClientDataset* const> clients);

}  // namespace pfcm

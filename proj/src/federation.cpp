#include "pfcm/federation.hpp"

#include <algorithm>
#include <cmath>

#include "pfcm/access_ledger.hpp"
#include "pfcm/errors.hpp"
#include "pfcm/rng.hpp"

namespace pfcm {

FlatWeights train_on_client(const FlatWeights& start, const ClientDataset& client,
                            const CnnSpec& spec, int epochs, const OptimizerConfig& opt,
                            int batch_size) {
  if (epochs < 1) throw ConfigError("local training needs at least one epoch");
  if (client.samples.empty()) {
    throw DataError("client " + client.client_id + " has no training data");
  }
  const Tensor features = batch_features(client);
  const std::vector<int> labels = batch_labels(client);
  const std::size_t n = client.samples.size();

  FlatWeights weights = start;
  OptimizerState state = OptimizerState::fresh(opt, weights.layout());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    if (batch_size <= 0 || static_cast<std::size_t>(batch_size) >= n) {
      const LossGrad lg = loss_and_grad(weights, spec, features, labels);
      sgd_step_inplace(weights, lg.grad, state);
    } else {
      for (std::size_t first = 0; first < n; first += static_cast<std::size_t>(batch_size)) {
        const std::size_t count = std::min<std::size_t>(batch_size, n - first);
        const Tensor chunk = slice_rows(features, first, count);
        const std::span<const int> chunk_labels(labels.data() + first, count);
        const LossGrad lg = loss_and_grad(weights, spec, chunk, chunk_labels);
        sgd_step_inplace(weights, lg.grad, state);
      }
    }
  }
  return weights;
}

ClientUpdate local_train(const FlatWeights& global, const ClientDataset& client,
                         const CnnSpec& spec, int epochs, const OptimizerConfig& opt,
                         int batch_size) {
  const FlatWeights trained = train_on_client(global, client, spec, epochs, opt, batch_size);
  return ClientUpdate{client.client_id, subtract(trained, global), client.samples.size()};
}

FlatWeights aggregate(std::span<const ClientUpdate> updates, bool sample_weighted) {
  if (updates.empty()) throw DataError("aggregate: no client updates");

  std::vector<const ClientUpdate*> ordered;
  ordered.reserve(updates.size());
  for (const ClientUpdate& u : updates) ordered.push_back(&u);
  std::stable_sort(ordered.begin(), ordered.end(), [](const ClientUpdate* a, const ClientUpdate* b) {
    return a->client_id < b->client_id;
  });

  FlatWeights sum(ordered[0]->delta.layout(), 0.0);
  double total_weight = 0.0;
  for (const ClientUpdate* u : ordered) {
    require_same_layout(sum, u->delta, "aggregate");
    const double w = sample_weighted ? static_cast<double>(u->num_samples) : 1.0;
    add_scaled_inplace(sum, u->delta, w);
    total_weight += w;
  }
  if (total_weight <= 0.0) throw DataError("aggregate: total weight is zero");
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= total_weight;
  return sum;
}

void apply_update(GlobalModelState& state, const FlatWeights& mean_delta) {
  add_scaled_inplace(state.weights, mean_delta, state.server_lr);
  ++state.round;
}

double dataset_accuracy(const FlatWeights& weights, const CnnSpec& spec,
                        std::span<const ClientDataset* const> clients) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const ClientDataset* client : clients) {
    const Tensor features = batch_features(*client);
    const std::vector<int> labels = batch_labels(*client);
    const std::vector<int> preds = predict(weights, spec, features);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == labels[i]) ++correct;
    }
    total += preds.size();
  }
  if (total == 0) throw DataError("accuracy over an empty dataset");
  return static_cast<double>(correct) / static_cast<double>(total);
}

FlatWeights run_rounds(FlatWeights weights, std::span<const ClientDataset* const> clients,
                       const CnnSpec& spec, const OptimizerConfig& opt, const FedConfig& cfg,
                       int rounds, std::vector<RoundReport>* reports, int first_round) {
  if (clients.empty()) throw DataError("run_rounds: no clients");
  if (rounds < 0) throw ConfigError("run_rounds: negative round count");

  GlobalModelState state{std::move(weights), first_round - 1, cfg.server_lr};
  std::vector<ClientUpdate> updates;
  updates.reserve(clients.size());

  for (int r = 0; r < rounds; ++r) {
    RoundReport report;
    updates.clear();
    for (const ClientDataset* client : clients) {
      if (reports && cfg.collect_reports) {
        const double loss =
            batch_loss(state.weights, spec, batch_features(*client), batch_labels(*client));
        if (!std::isfinite(loss)) {
          throw Error("training diverged on client " + client->client_id);
        }
        report.client_losses.emplace_back(client->client_id, loss);
      }
      updates.push_back(
          local_train(state.weights, *client, spec, cfg.local_epochs, opt, cfg.batch_size));
    }
    const FlatWeights mean_delta = aggregate(updates, cfg.sample_weighted);
    apply_update(state, mean_delta);

    if (reports && cfg.collect_reports) {
      report.round = state.round;
      double sum = 0.0;
      for (const auto& [id, loss] : report.client_losses) sum += loss;
      report.mean_train_loss = sum / static_cast<double>(report.client_losses.size());
      report.probe_accuracy = dataset_accuracy(state.weights, spec, clients);
      reports->push_back(std::move(report));
    }
  }
  return std::move(state.weights);
}

FedAvgResult run_fedavg(std::span<const ClientDataset> clients, const CnnSpec& spec,
                        const OptimizerConfig& opt, const FedConfig& cfg, std::uint64_t seed) {
  if (clients.empty()) throw DataError("run_fedavg: no clients");
  const std::vector<const ClientDataset*> ordered = sorted_by_id(clients);

  FedAvgResult result;
  DataPhaseScope phase(DataPhase::kFedAvg);
  FlatWeights weights = init_weights(spec, sub_seed(seed, "init"));
  weights = run_rounds(std::move(weights), ordered, spec, opt, cfg, cfg.rounds, &result.reports);
  result.global = GlobalModelState{std::move(weights), cfg.rounds, cfg.server_lr};
  return result;
}

}  // namespace pfcm

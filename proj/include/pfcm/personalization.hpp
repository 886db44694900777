#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfcm/cluster.hpp"

namespace pfcm {

// Row index is the true class, column index the predicted class.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return classes_; }
  void add(int truth, int predicted);
  std::int64_t count(int truth, int predicted) const;
  std::int64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  double accuracy() const;  // trace / total
  // true-positive rate of the class; 1 when the class has no samples
  double sensitivity(int cls) const;
  // true-negative rate of the class; 1 when every sample belongs to the class
  double specificity(int cls) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_ = 0;
  std::vector<std::int64_t> counts_;
};

struct PersonalizationConfig {
  int registration_rounds = 5;  // P
  int local_epochs = 1;
  int batch_size = 0;
  // compare the registration delta against absolute cluster weights instead
  // of cluster directions (weights minus the shared global model)
  bool literal_similarity = false;
};

struct TestRegistration {
  std::string client_id;
  FlatWeights trained;  // w after P rounds from the shared global model
  FlatWeights delta;    // trained - global
  int assigned_cluster = -1;
};

// One-time registration: train the shared global model on the new client for
// P rounds of local SGD (no aggregation; fresh velocity each round) and take
// the weight difference against the starting point.
TestRegistration register_client(const ClientDataset& client, const FlatWeights& global,
                                 const CnnSpec& spec, const OptimizerConfig& opt,
                                 const PersonalizationConfig& cfg);

// argmax of cosine similarity between the registration delta and each cluster
// direction; ties resolve to the lowest cluster id, and if every similarity is
// undefined (zero norms) cluster 0 is assigned with a warning
int find_nearest_cluster(const FlatWeights& delta, std::span<const ClusterModel> clusters,
                         const FlatWeights& global, bool literal_similarity = false,
                         std::vector<std::string>* warnings = nullptr);

struct ClientEval {
  std::string client_id;
  int assigned_cluster = -1;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

ClientEval evaluate(const FlatWeights& weights, const CnnSpec& spec, const ClientDataset& client);

struct EvalReport {
  std::vector<ClientEval> per_client;        // ascending client_id
  double mean_client_accuracy = 0.0;         // the headline number
  double pooled_accuracy = 0.0;              // trace of the pooled matrix
  ConfusionMatrix pooled;
  std::vector<double> sensitivity;           // per class, from the pooled matrix
  std::vector<double> specificity;
  double mean_sensitivity = 0.0;
  double mean_specificity = 0.0;
};

EvalReport report_from_evals(std::vector<ClientEval> evals, int num_classes);

// Register every queued test client, route it to its nearest cluster model
// and evaluate it there; accuracies are averaged per client.
EvalReport test_all(std::span<const ClientDataset> test_clients,
                    std::span<const ClusterModel> clusters, const FlatWeights& global,
                    const CnnSpec& spec, const OptimizerConfig& opt,
                    const PersonalizationConfig& cfg,
                    std::vector<std::string>* warnings = nullptr);

}  // namespace pfcm

#pragma once

#include <span>
#include <string>
#include <vector>

#include "pfcm/federation.hpp"

namespace pfcm {

enum class DistanceMetric { kCosine, kEuclidean };
enum class Linkage { kAverage, kSingle, kComplete };

// one weight delta per training client, rows in ascending client_id order
struct DeltaMatrix {
  std::vector<ClientUpdate> rows;
};

DeltaMatrix compute_deltas(const FlatWeights& global, std::span<const ClientDataset> clients,
                           const CnnSpec& spec, int epochs, const OptimizerConfig& opt,
                           int batch_size = 0);

struct DistanceOptions {
  DistanceMetric metric = DistanceMetric::kCosine;
  // cluster on the output layer only instead of the full flattened vector
  bool last_layer_only = false;
};

// symmetric matrix with zero diagonal; a zero-norm delta sits at cosine
// distance 1 from every other row (and trips a warning)
std::vector<std::vector<double>> pairwise_distance(const DeltaMatrix& deltas,
                                                   const DistanceOptions& options,
                                                   std::vector<std::string>* warnings = nullptr);

struct Merge {
  int node_a = 0;  // node_a < node_b
  int node_b = 0;
  double distance = 0.0;
  int new_node_id = 0;
};

struct Dendrogram {
  std::size_t leaf_count = 0;
  std::vector<std::string> leaf_ids;
  std::vector<Merge> merges;  // exactly leaf_count - 1, non-decreasing distance
};

// Bottom-up agglomeration. Inter-cluster distances are recomputed from the
// original leaf-pair distances in a canonical order, which keeps merge
// records exactly reproducible; ties break on the smallest (node_a, node_b)
// pair. Leaves are nodes 0..n-1, merge k creates node n+k.
Dendrogram agglomerate(const std::vector<std::vector<double>>& distances, Linkage linkage,
                       std::vector<std::string> leaf_ids = {});

struct CutCriterion {
  enum class Kind { kLargestGap, kClusterCount, kDistanceThreshold };
  Kind kind = Kind::kLargestGap;
  int k = 0;
  double tau = 0.0;

  static CutCriterion largest_gap() { return {}; }
  static CutCriterion clusters(int k) { return {Kind::kClusterCount, k, 0.0}; }
  static CutCriterion threshold(double tau) { return {Kind::kDistanceThreshold, 0, tau}; }
};

// Flat partition of leaf indices; largest_gap stops just below the merge with
// the maximal distance increase. Clusters come out ordered by smallest member.
std::vector<std::vector<int>> cut(const Dendrogram& dendrogram, const CutCriterion& criterion);

struct ClusterModel {
  int cluster_id = 0;
  std::vector<std::string> member_ids;
  FlatWeights weights;
};

struct ClusterTrainResult {
  std::vector<ClusterModel> models;
  std::vector<std::vector<RoundReport>> reports;  // one series per cluster
};

// Per-cluster FedAvg seeded from the shared global weights, restricted to the
// cluster's member clients. Partition indices refer to ascending client_id
// order over `clients`.
ClusterTrainResult train_clusters(const std::vector<std::vector<int>>& partition,
                                  const FlatWeights& global,
                                  std::span<const ClientDataset> clients, const CnnSpec& spec,
                                  const OptimizerConfig& opt, const FedConfig& cfg,
                                  int first_round = 1);

// chance-corrected agreement between two labelings of the same items
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace pfcm

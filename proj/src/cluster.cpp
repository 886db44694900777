#include "pfcm/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pfcm/access_ledger.hpp"
#include "pfcm/errors.hpp"

namespace pfcm {

DeltaMatrix compute_deltas(const FlatWeights& global, std::span<const ClientDataset> clients,
                           const CnnSpec& spec, int epochs, const OptimizerConfig& opt,
                           int batch_size) {
  if (clients.empty()) throw DataError("compute_deltas: no clients");
  DataPhaseScope phase(DataPhase::kClusterDeltas);
  DeltaMatrix out;
  out.rows.reserve(clients.size());
  for (const ClientDataset* client : sorted_by_id(clients)) {
    out.rows.push_back(local_train(global, *client, spec, epochs, opt, batch_size));
  }
  return out;
}

namespace {

std::span<const double> delta_view(const ClientUpdate& row, const DistanceOptions& options) {
  if (!options.last_layer_only) return row.delta.values();
  // fc2.weight and fc2.bias are the trailing slots, so one contiguous view
  const LayerSlot& first = row.delta.layout()->slot("fc2.weight");
  return row.delta.values().subspan(first.offset);
}

}  // namespace

std::vector<std::vector<double>> pairwise_distance(const DeltaMatrix& deltas,
                                                   const DistanceOptions& options,
                                                   std::vector<std::string>* warnings) {
  const std::size_t n = deltas.rows.size();
  if (n == 0) throw DataError("pairwise_distance: empty delta matrix");
  for (const ClientUpdate& row : deltas.rows) {
    require_same_layout(deltas.rows[0].delta, row.delta, "pairwise_distance");
  }

  std::vector<std::span<const double>> views;
  views.reserve(n);
  for (const ClientUpdate& row : deltas.rows) views.push_back(delta_view(row, options));

  std::vector<bool> zero_norm(n, false);
  if (options.metric == DistanceMetric::kCosine) {
    for (std::size_t i = 0; i < n; ++i) {
      if (norm(views[i]) == 0.0) {
        zero_norm[i] = true;
        if (warnings) {
          warnings->push_back("client " + deltas.rows[i].client_id +
                              " has a zero-norm delta; cosine distance to all others set to 1");
        }
      }
    }
  }

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d;
      if (options.metric == DistanceMetric::kCosine) {
        if (zero_norm[i] || zero_norm[j]) {
          d = 1.0;
        } else {
          d = 1.0 - *cosine_similarity(views[i], views[j]);
        }
      } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < views[i].size(); ++k) {
          const double diff = views[i][k] - views[j][k];
          acc += diff * diff;
        }
        d = std::sqrt(acc);
      }
      dist[i][j] = d;
      dist[j][i] = d;
    }
  }
  return dist;
}

namespace {

struct ActiveCluster {
  int node_id = 0;
  std::vector<int> members;  // sorted leaf indices
};

// Canonical inter-cluster distance from the original leaf-pair distances.
// `a` must be the cluster with the smaller node id so the average-linkage
// summation order is reproducible.
double cluster_distance(const ActiveCluster& a, const ActiveCluster& b,
                        const std::vector<std::vector<double>>& base, Linkage linkage) {
  switch (linkage) {
    case Linkage::kSingle: {
      double best = std::numeric_limits<double>::infinity();
      for (int p : a.members)
        for (int q : b.members) best = std::min(best, base[p][q]);
      return best;
    }
    case Linkage::kComplete: {
      double best = -std::numeric_limits<double>::infinity();
      for (int p : a.members)
        for (int q : b.members) best = std::max(best, base[p][q]);
      return best;
    }
    case Linkage::kAverage:
    default: {
      double acc = 0.0;
      for (int p : a.members)
        for (int q : b.members) acc += base[p][q];
      return acc / (static_cast<double>(a.members.size()) * static_cast<double>(b.members.size()));
    }
  }
}

void check_distance_matrix(const std::vector<std::vector<double>>& d) {
  const std::size_t n = d.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i].size() != n) throw ShapeError("agglomerate: distance matrix is not square");
    if (d[i][i] != 0.0) throw ShapeError("agglomerate: non-zero diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      if (!(d[i][j] >= 0.0)) throw ShapeError("agglomerate: negative or NaN distance");
      if (d[i][j] != d[j][i]) throw ShapeError("agglomerate: asymmetric distance matrix");
    }
  }
}

}  // namespace

Dendrogram agglomerate(const std::vector<std::vector<double>>& distances, Linkage linkage,
                       std::vector<std::string> leaf_ids) {
  const std::size_t n = distances.size();
  if (n == 0) throw DataError("agglomerate: no leaves");
  check_distance_matrix(distances);
  if (leaf_ids.empty()) {
    for (std::size_t i = 0; i < n; ++i) leaf_ids.push_back(std::to_string(i));
  }
  if (leaf_ids.size() != n) throw ShapeError("agglomerate: leaf id count mismatch");

  Dendrogram out;
  out.leaf_count = n;
  out.leaf_ids = std::move(leaf_ids);

  std::vector<ActiveCluster> active;
  active.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    active.push_back(ActiveCluster{static_cast<int>(i), {static_cast<int>(i)}});
  }

  // pair distances keyed by (smaller node id, larger node id)
  std::map<std::pair<int, int>, double> pair_dist;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      pair_dist[{static_cast<int>(i), static_cast<int>(j)}] = distances[i][j];
    }
  }

  for (std::size_t step = 0; active.size() > 1; ++step) {
    // pick the closest pair; active stays sorted by node id, so scanning in
    // order realizes the smallest-(node_a,node_b) tie-break
    std::size_t best_i = 0, best_j = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const double d = pair_dist.at({active[i].node_id, active[j].node_id});
        if (d < best_d) {
          best_d = d;
          best_i = i;
          best_j = j;
        }
      }
    }

    ActiveCluster merged;
    merged.node_id = static_cast<int>(n + step);
    std::merge(active[best_i].members.begin(), active[best_i].members.end(),
               active[best_j].members.begin(), active[best_j].members.end(),
               std::back_inserter(merged.members));
    out.merges.push_back(
        Merge{active[best_i].node_id, active[best_j].node_id, best_d, merged.node_id});

    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_j));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_i));
    for (const ActiveCluster& other : active) {
      pair_dist[{other.node_id, merged.node_id}] =
          cluster_distance(other, merged, distances, linkage);
    }
    active.push_back(std::move(merged));  // largest node id, order preserved
  }
  return out;
}

std::vector<std::vector<int>> cut(const Dendrogram& dendrogram, const CutCriterion& criterion) {
  const std::size_t n = dendrogram.leaf_count;
  if (n == 0) throw DataError("cut: empty dendrogram");
  if (dendrogram.merges.size() + 1 != n) throw ShapeError("cut: malformed dendrogram");

  std::size_t applied = 0;
  switch (criterion.kind) {
    case CutCriterion::Kind::kClusterCount: {
      if (criterion.k < 1) throw ConfigError("cut: cluster count must be positive");
      const std::size_t k = std::min<std::size_t>(criterion.k, n);
      applied = n - k;
      break;
    }
    case CutCriterion::Kind::kDistanceThreshold: {
      while (applied < dendrogram.merges.size() &&
             dendrogram.merges[applied].distance <= criterion.tau) {
        ++applied;
      }
      break;
    }
    case CutCriterion::Kind::kLargestGap:
    default: {
      // stop just below the merge whose distance jumps the most over its
      // predecessor; with fewer than two merges there is no gap to split on
      if (dendrogram.merges.size() < 2) {
        applied = dendrogram.merges.size();
      } else {
        std::size_t best = 1;
        double best_gap = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < dendrogram.merges.size(); ++i) {
          const double gap = dendrogram.merges[i].distance - dendrogram.merges[i - 1].distance;
          if (gap > best_gap) {
            best_gap = gap;
            best = i;
          }
        }
        applied = best;
      }
      break;
    }
  }

  // replay the first `applied` merges over singleton clusters
  std::map<int, std::vector<int>> clusters;  // node id -> sorted leaf members
  for (std::size_t i = 0; i < n; ++i) clusters[static_cast<int>(i)] = {static_cast<int>(i)};
  for (std::size_t m = 0; m < applied; ++m) {
    const Merge& merge = dendrogram.merges[m];
    std::vector<int> joined;
    std::merge(clusters.at(merge.node_a).begin(), clusters.at(merge.node_a).end(),
               clusters.at(merge.node_b).begin(), clusters.at(merge.node_b).end(),
               std::back_inserter(joined));
    clusters.erase(merge.node_a);
    clusters.erase(merge.node_b);
    clusters[merge.new_node_id] = std::move(joined);
  }

  std::vector<std::vector<int>> out;
  out.reserve(clusters.size());
  for (auto& [node, members] : clusters) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) { return a[0] < b[0]; });
  return out;
}

ClusterTrainResult train_clusters(const std::vector<std::vector<int>>& partition,
                                  const FlatWeights& global,
                                  std::span<const ClientDataset> clients, const CnnSpec& spec,
                                  const OptimizerConfig& opt, const FedConfig& cfg,
                                  int first_round) {
  const std::vector<const ClientDataset*> ordered = sorted_by_id(clients);

  // the partition must cover every client exactly once
  std::vector<bool> seen(ordered.size(), false);
  for (const auto& members : partition) {
    if (members.empty()) throw DataError("train_clusters: empty cluster");
    for (int idx : members) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= ordered.size() || seen[idx]) {
        throw DataError("train_clusters: partition does not partition the clients");
      }
      seen[idx] = true;
    }
  }
  for (bool s : seen) {
    if (!s) throw DataError("train_clusters: partition misses a client");
  }

  DataPhaseScope phase(DataPhase::kClusterTrain);
  ClusterTrainResult result;
  for (std::size_t k = 0; k < partition.size(); ++k) {
    std::vector<const ClientDataset*> members;
    members.reserve(partition[k].size());
    for (int idx : partition[k]) members.push_back(ordered[idx]);

    std::vector<RoundReport> reports;
    FlatWeights weights = run_rounds(global, members, spec, opt, cfg, cfg.rounds,
                                     cfg.collect_reports ? &reports : nullptr, first_round);

    ClusterModel model;
    model.cluster_id = static_cast<int>(k);
    for (const ClientDataset* c : members) model.member_ids.push_back(c->client_id);
    model.weights = std::move(weights);
    result.models.push_back(std::move(model));
    result.reports.push_back(std::move(reports));
  }
  return result;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("adjusted_rand_index: length mismatch");
  if (a.empty()) throw DataError("adjusted_rand_index: empty labelings");

  std::map<std::pair<int, int>, long long> joint;
  std::map<int, long long> count_a, count_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++count_a[a[i]];
    ++count_b[b[i]];
  }
  const auto choose2 = [](long long c) { return 0.5 * static_cast<double>(c) * (c - 1); };

  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, c] : joint) sum_joint += choose2(c);
  for (const auto& [key, c] : count_a) sum_a += choose2(c);
  for (const auto& [key, c] : count_b) sum_b += choose2(c);

  const double pairs = choose2(static_cast<long long>(a.size()));
  const double expected = sum_a * sum_b / pairs;
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 1.0;  // both labelings trivially agree
  return (sum_joint - expected) / (maximum - expected);
}

}  // namespace pfcm

#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "pfcm/access_ledger.hpp"
#include "pfcm/cluster.hpp"
#include "pfcm/errors.hpp"
#include "pfcm/rng.hpp"

using namespace pfcm;

namespace {

const CnnSpec kSpec{9, 1, 2, 3, 3, 5, 3};
const OptimizerConfig kOpt{0.1, 0.5};

ClientDataset make_client(const std::string& id, std::size_t samples, std::uint64_t seed,
                          int label = -1) {
  Rng rng(seed);
  ClientDataset client;
  client.client_id = id;
  for (std::size_t i = 0; i < samples; ++i) {
    Sample s;
    s.id = seed * 1000 + i;
    for (int f = 0; f < kGridCells - 1; ++f) s.matrix[f] = rng.uniform01();
    s.label = label >= 0 ? label : static_cast<int>(rng.uniform_below(3));
    client.samples.push_back(s);
  }
  return client;
}

LayoutPtr vec_layout(std::size_t dim) {
  return std::make_shared<WeightLayout>(std::vector<LayerSlot>{{"w", {dim}, 0}});
}

DeltaMatrix toy_deltas(const std::vector<std::vector<double>>& vectors) {
  DeltaMatrix m;
  const auto layout = vec_layout(vectors[0].size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    m.rows.push_back({"c" + std::to_string(i), FlatWeights(layout, vectors[i]), 1});
  }
  return m;
}

std::vector<std::vector<double>> random_distance_matrix(std::size_t n, Rng& rng,
                                                        bool inject_ties) {
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = rng.uniform01();
      if (inject_ties && rng.uniform01() < 0.3) v = 0.5;  // force exact ties
      d[i][j] = v;
      d[j][i] = v;
    }
  }
  return d;
}

}  // namespace

TEST_CASE("zero learning rate gives all-zero deltas") {
  std::vector<ClientDataset> clients{make_client("a", 3, 1), make_client("b", 3, 2)};
  const FlatWeights global = init_weights(kSpec, 5);
  const DeltaMatrix deltas = compute_deltas(global, clients, kSpec, 1, {0.0, 0.5});
  REQUIRE(deltas.rows.size() == 2);
  for (const ClientUpdate& row : deltas.rows) {
    for (double v : row.delta.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("identical clients produce identical deltas") {
  ClientDataset a = make_client("a", 4, 3);
  ClientDataset b = a;
  b.client_id = "b";
  const FlatWeights global = init_weights(kSpec, 6);
  const std::vector<ClientDataset> clients{a, b};
  const DeltaMatrix deltas = compute_deltas(global, clients, kSpec, 1, kOpt);
  CHECK(bit_equal(deltas.rows[0].delta, deltas.rows[1].delta));
}

TEST_CASE("deltas equal the federation module's local updates") {
  std::vector<ClientDataset> clients{make_client("b", 3, 7), make_client("a", 4, 8)};
  const FlatWeights global = init_weights(kSpec, 9);
  const DeltaMatrix deltas = compute_deltas(global, clients, kSpec, 2, kOpt);

  REQUIRE(deltas.rows.size() == 2);
  CHECK(deltas.rows[0].client_id == "a");  // ascending order
  for (const ClientUpdate& row : deltas.rows) {
    const ClientDataset& client = row.client_id == "a" ? clients[1] : clients[0];
    const ClientUpdate expected = local_train(global, client, kSpec, 2, kOpt);
    CHECK(bit_equal(row.delta, expected.delta));
  }
}

TEST_CASE("cosine distances match hand calculations") {
  const DeltaMatrix m = toy_deltas({{1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}});
  const auto d = pairwise_distance(m, {});
  CHECK(d[0][0] == 0.0);
  CHECK(d[0][3] == doctest::Approx(0.0).epsilon(1e-15));          // identical vectors
  CHECK(d[0][2] == doctest::Approx(1.0).epsilon(1e-15));          // orthogonal
  CHECK(d[0][1] == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));  // 45 degrees
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(d[i][j] == d[j][i]);
  }
}

TEST_CASE("zero-norm deltas sit at distance one and warn") {
  const DeltaMatrix m = toy_deltas({{0.0, 0.0}, {1.0, 2.0}, {0.0, 0.0}});
  std::vector<std::string> warnings;
  const auto d = pairwise_distance(m, {}, &warnings);
  CHECK(d[0][1] == 1.0);
  CHECK(d[0][2] == 1.0);  // two zero rows are also distance 1 apart
  CHECK(d[0][0] == 0.0);
  CHECK(warnings.size() == 2);
}

TEST_CASE("euclidean metric is available behind the options") {
  const DeltaMatrix m = toy_deltas({{0.0, 0.0}, {3.0, 4.0}});
  const auto d = pairwise_distance(m, {DistanceMetric::kEuclidean, false});
  CHECK(d[0][1] == doctest::Approx(5.0));
}

TEST_CASE("single leaf yields an empty merge list") {
  const Dendrogram d = agglomerate({{0.0}}, Linkage::kAverage);
  CHECK(d.leaf_count == 1);
  CHECK(d.merges.empty());
  const auto clusters = cut(d, CutCriterion::largest_gap());
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0] == std::vector<int>{0});
}

TEST_CASE("the final merge joins two well-separated groups") {
  // leaves 0,1 close together; 2,3 close together; groups far apart
  const std::vector<std::vector<double>> d{
      {0.0, 0.1, 5.0, 5.2},
      {0.1, 0.0, 5.1, 5.3},
      {5.0, 5.1, 0.0, 0.2},
      {5.2, 5.3, 0.2, 0.0},
  };
  for (const Linkage linkage : {Linkage::kAverage, Linkage::kSingle, Linkage::kComplete}) {
    const Dendrogram dendro = agglomerate(d, linkage);
    REQUIRE(dendro.merges.size() == 3);
    CHECK(dendro.merges[0].node_a == 0);
    CHECK(dendro.merges[0].node_b == 1);
    CHECK(dendro.merges[1].node_a == 2);
    CHECK(dendro.merges[1].node_b == 3);
    CHECK(dendro.merges[2].node_a == 4);
    CHECK(dendro.merges[2].node_b == 5);

    const auto clusters = cut(dendro, CutCriterion::largest_gap());
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0] == std::vector<int>{0, 1});
    CHECK(clusters[1] == std::vector<int>{2, 3});
  }
}

TEST_CASE("agglomeration matches the naive reference on random instances") {
  Rng rng(2718);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(7);  // up to 8 leaves
    const auto d = random_distance_matrix(n, rng, trial % 2 == 0);
    for (const Linkage linkage : {Linkage::kAverage, Linkage::kSingle, Linkage::kComplete}) {
      const Dendrogram dendro = agglomerate(d, linkage);
      const auto reference = oracle::naive_linkage(d, linkage);
      REQUIRE(dendro.merges.size() == reference.size());
      for (std::size_t m = 0; m < reference.size(); ++m) {
        CHECK(dendro.merges[m].node_a == reference[m].node_a);
        CHECK(dendro.merges[m].node_b == reference[m].node_b);
        CHECK(dendro.merges[m].new_node_id == reference[m].new_node_id);
        CHECK(dendro.merges[m].distance == reference[m].distance);  // bit-exact
      }
      ++checked;
    }
  }
  CHECK(checked == 120);
}

TEST_CASE("merge distances are monotone and count n-1") {
  Rng rng(31415);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + rng.uniform_below(6);
    const auto d = random_distance_matrix(n, rng, false);
    for (const Linkage linkage : {Linkage::kAverage, Linkage::kComplete, Linkage::kSingle}) {
      const Dendrogram dendro = agglomerate(d, linkage);
      REQUIRE(dendro.merges.size() == n - 1);
      for (std::size_t m = 1; m < dendro.merges.size(); ++m) {
        CHECK(dendro.merges[m].distance >= dendro.merges[m - 1].distance);
      }
    }
  }
}

TEST_CASE("cluster-count cuts hit the requested granularity") {
  Rng rng(6);
  const auto d = random_distance_matrix(6, rng, false);
  const Dendrogram dendro = agglomerate(d, Linkage::kAverage);

  const auto singletons = cut(dendro, CutCriterion::clusters(6));
  CHECK(singletons.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(singletons[i] == std::vector<int>{static_cast<int>(i)});

  const auto everyone = cut(dendro, CutCriterion::clusters(1));
  REQUIRE(everyone.size() == 1);
  CHECK(everyone[0].size() == 6);

  CHECK(cut(dendro, CutCriterion::clusters(100)).size() == 6);  // clamped to n
}

TEST_CASE("threshold cuts keep merges at or below tau") {
  const std::vector<std::vector<double>> d{
      {0.0, 0.1, 5.0, 5.2},
      {0.1, 0.0, 5.1, 5.3},
      {5.0, 5.1, 0.0, 0.2},
      {5.2, 5.3, 0.2, 0.0},
  };
  const Dendrogram dendro = agglomerate(d, Linkage::kAverage);
  CHECK(cut(dendro, CutCriterion::threshold(1.0)).size() == 2);
  CHECK(cut(dendro, CutCriterion::threshold(0.15)).size() == 3);
  CHECK(cut(dendro, CutCriterion::threshold(10.0)).size() == 1);
  CHECK(cut(dendro, CutCriterion::threshold(0.0)).size() == 4);
}

TEST_CASE("largest gap recovers planted groups from clean directions") {
  // three groups of delta directions with small within-group noise
  Rng rng(77);
  std::vector<std::vector<double>> vectors;
  std::vector<int> truth;
  const std::vector<std::vector<double>> centers{
      {1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}, {0.0, 0.0, 1.0, 0.0}};
  for (int i = 0; i < 12; ++i) {
    const int g = i % 3;
    std::vector<double> v = centers[g];
    for (double& x : v) x += 0.05 * rng.normal();
    vectors.push_back(std::move(v));
    truth.push_back(g);
  }
  const DeltaMatrix m = toy_deltas(vectors);
  const Dendrogram dendro = agglomerate(pairwise_distance(m, {}), Linkage::kAverage);
  const auto clusters = cut(dendro, CutCriterion::largest_gap());

  std::vector<int> assignment(12, -1);
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    for (int leaf : clusters[k]) assignment[leaf] = static_cast<int>(k);
  }
  CHECK(adjusted_rand_index(assignment, truth) == doctest::Approx(1.0));
}

TEST_CASE("adjusted rand index matches hand-computed values") {
  const std::vector<int> a{0, 0, 1, 1};
  CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0));
  const std::vector<int> relabeled{1, 1, 0, 0};
  CHECK(adjusted_rand_index(a, relabeled) == doctest::Approx(1.0));

  // classic worked example: partitions {0,0,0,1,1,1} vs {0,0,1,1,2,2}
  const std::vector<int> x{0, 0, 0, 1, 1, 1};
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  // pair counts: joint sum C(2,2)*... = (1+0+1+0+1+0) with a=6, b=3 over 15 pairs
  // ARI = (2 - 6*3/15) / ((6+3)/2 - 6*3/15) = 0.8/3.3
  CHECK(adjusted_rand_index(x, y) == doctest::Approx(0.8 / 3.3));

  const std::vector<int> ones{0, 0, 0, 0};
  const std::vector<int> split{0, 0, 1, 1};
  CHECK(adjusted_rand_index(ones, ones) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(ones, split) == doctest::Approx(0.0));
}

TEST_CASE("a single cluster over all clients continues plain federation") {
  std::vector<ClientDataset> clients;
  for (int i = 0; i < 3; ++i) clients.push_back(make_client("c" + std::to_string(i), 3, 50 + i));
  const FlatWeights global = init_weights(kSpec, 2);

  FedConfig cfg;
  cfg.rounds = 4;
  const ClusterTrainResult result =
      train_clusters({{0, 1, 2}}, global, clients, kSpec, kOpt, cfg);
  REQUIRE(result.models.size() == 1);

  const std::vector<const ClientDataset*> ordered = sorted_by_id(clients);
  const FlatWeights expected = run_rounds(global, ordered, kSpec, kOpt, cfg, cfg.rounds);
  CHECK(bit_equal(result.models[0].weights, expected));
}

TEST_CASE("a singleton cluster is local training on that client") {
  std::vector<ClientDataset> clients{make_client("a", 3, 60), make_client("b", 3, 61)};
  const FlatWeights global = init_weights(kSpec, 3);
  FedConfig cfg;
  cfg.rounds = 5;
  const ClusterTrainResult result =
      train_clusters({{0}, {1}}, global, clients, kSpec, kOpt, cfg);
  REQUIRE(result.models.size() == 2);

  FlatWeights w = global;
  for (int round = 0; round < cfg.rounds; ++round) {
    const ClientUpdate u = local_train(w, clients[0], kSpec, 1, kOpt);
    GlobalModelState state{std::move(w), round, 1.0};
    apply_update(state, u.delta);
    w = std::move(state.weights);
  }
  CHECK(bit_equal(result.models[0].weights, w));
  CHECK(result.models[0].member_ids == std::vector<std::string>{"a"});
}

TEST_CASE("cluster training is isolated from other clusters' data") {
  std::vector<ClientDataset> clients{make_client("a", 3, 70), make_client("b", 3, 71),
                                     make_client("c", 3, 72)};
  const FlatWeights global = init_weights(kSpec, 4);
  FedConfig cfg;
  cfg.rounds = 3;

  const ClusterTrainResult before =
      train_clusters({{0}, {1, 2}}, global, clients, kSpec, kOpt, cfg);

  // scramble the second cluster's data; the first cluster must not move
  for (std::size_t i = 1; i < clients.size(); ++i) {
    for (Sample& s : clients[i].samples) {
      for (double& v : s.matrix) v = 1.0 - v;
      s.label = (s.label + 1) % 3;
    }
  }
  const ClusterTrainResult after =
      train_clusters({{0}, {1, 2}}, global, clients, kSpec, kOpt, cfg);
  CHECK(bit_equal(before.models[0].weights, after.models[0].weights));
  CHECK_FALSE(bit_equal(before.models[1].weights, after.models[1].weights));
}

TEST_CASE("partitions must cover every client exactly once") {
  std::vector<ClientDataset> clients{make_client("a", 2, 80), make_client("b", 2, 81)};
  const FlatWeights global = init_weights(kSpec, 5);
  FedConfig cfg;
  cfg.rounds = 1;
  CHECK_THROWS_AS(train_clusters({{0}}, global, clients, kSpec, kOpt, cfg), DataError);
  CHECK_THROWS_AS(train_clusters({{0, 0}, {1}}, global, clients, kSpec, kOpt, cfg), DataError);
  CHECK_THROWS_AS(train_clusters({{0, 1, 2}}, global, clients, kSpec, kOpt, cfg), DataError);
}

TEST_CASE("delta computation and cluster training use their ledger phases") {
  AccessLedger::instance().reset();
  std::vector<ClientDataset> clients{make_client("a", 2, 90), make_client("b", 2, 91)};
  const FlatWeights global = init_weights(kSpec, 6);

  compute_deltas(global, clients, kSpec, 1, kOpt);
  FedConfig cfg;
  cfg.rounds = 1;
  train_clusters({{0, 1}}, global, clients, kSpec, kOpt, cfg);

  const auto& ledger = AccessLedger::instance();
  for (const ClientDataset& c : clients) {
    for (const Sample& s : c.samples) {
      CHECK(ledger.accessed(DataPhase::kClusterDeltas).count(s.id) == 1);
      CHECK(ledger.accessed(DataPhase::kClusterTrain).count(s.id) == 1);
    }
  }
  CHECK(ledger.accessed(DataPhase::kFedAvg).empty());
}

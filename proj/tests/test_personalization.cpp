#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pfcm/access_ledger.hpp"
#include "pfcm/errors.hpp"
#include "pfcm/personalization.hpp"
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

ClusterModel toy_cluster(int id, LayoutPtr layout, const std::vector<double>& weights) {
  return ClusterModel{id, {}, FlatWeights(std::move(layout), weights)};
}

}  // namespace

TEST_CASE("zero learning rate registration falls back to cluster zero") {
  const ClientDataset client = make_client("t", 3, 1);
  const FlatWeights global = init_weights(kSpec, 2);
  PersonalizationConfig cfg;
  cfg.registration_rounds = 3;
  const TestRegistration reg =
      register_client(client, global, kSpec, {0.0, 0.5}, cfg);
  for (double v : reg.delta.values()) CHECK(v == 0.0);

  std::vector<ClusterModel> clusters{
      ClusterModel{0, {}, init_weights(kSpec, 3)},
      ClusterModel{1, {}, init_weights(kSpec, 4)},
  };
  std::vector<std::string> warnings;
  CHECK(find_nearest_cluster(reg.delta, clusters, global, false, &warnings) == 0);
  CHECK(warnings.size() == 1);
}

TEST_CASE("a clone of a training client registers with that client's delta") {
  const ClientDataset trainer = make_client("trainer", 4, 5);
  ClientDataset clone = trainer;
  clone.client_id = "newcomer";
  const FlatWeights global = init_weights(kSpec, 6);

  const ClientUpdate trained = local_train(global, trainer, kSpec, 1, kOpt);
  PersonalizationConfig cfg;
  cfg.registration_rounds = 1;
  cfg.local_epochs = 1;
  const TestRegistration reg = register_client(clone, global, kSpec, kOpt, cfg);
  CHECK(bit_equal(reg.delta, trained.delta));
}

TEST_CASE("single-round registration of a one-sample client matches one optimizer step") {
  const ClientDataset client = make_client("t", 1, 9);
  const FlatWeights global = init_weights(kSpec, 10);

  const LossGrad lg =
      loss_and_grad(global, kSpec, batch_features(client), batch_labels(client));
  OptimizerState state = OptimizerState::fresh(kOpt, global.layout());
  const FlatWeights stepped = sgd_step(global, lg.grad, state);

  PersonalizationConfig cfg;
  cfg.registration_rounds = 1;
  const TestRegistration reg = register_client(client, global, kSpec, kOpt, cfg);
  CHECK(bit_equal(reg.trained, stepped));
  CHECK(bit_equal(reg.delta, subtract(stepped, global)));
}

TEST_CASE("a single cluster always wins") {
  const auto layout = vec_layout(3);
  const FlatWeights global(layout, 0.0);
  const std::vector<ClusterModel> one{toy_cluster(0, layout, {0.4, 0.2, -0.1})};
  FlatWeights delta(layout, std::vector<double>{-1.0, 2.0, 0.5});
  CHECK(find_nearest_cluster(delta, one, global) == 0);
}

TEST_CASE("a delta equal to a cluster direction selects that cluster") {
  const auto layout = vec_layout(3);
  const FlatWeights global(layout, std::vector<double>{1.0, 1.0, 1.0});
  std::vector<ClusterModel> clusters{
      toy_cluster(0, layout, {2.0, 1.0, 1.0}),   // direction (1,0,0)
      toy_cluster(1, layout, {1.0, 3.0, 1.0}),   // direction (0,2,0)
      toy_cluster(2, layout, {1.0, 1.0, 0.5}),   // direction (0,0,-0.5)
  };
  const FlatWeights delta(layout, std::vector<double>{0.0, 5.0, 0.0});
  CHECK(find_nearest_cluster(delta, clusters, global) == 1);
}

TEST_CASE("nearest cluster matches a brute-force cosine scan") {
  const auto layout = vec_layout(4);
  Rng rng(12);
  const FlatWeights global(layout, std::vector<double>{0.1, -0.2, 0.3, 0.0});
  std::vector<ClusterModel> clusters;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> w(4);
    for (double& v : w) v = rng.normal();
    clusters.push_back(toy_cluster(k, layout, w));
  }
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> d(4);
    for (double& v : d) v = rng.normal();
    const FlatWeights delta(layout, d);

    int best = -1;
    double best_sim = -2.0;
    for (int k = 0; k < 3; ++k) {
      const FlatWeights dir = subtract(clusters[k].weights, global);
      const auto sim = cosine_similarity(delta.values(), dir.values());
      if (sim && *sim > best_sim) {
        best_sim = *sim;
        best = k;
      }
    }
    CHECK(find_nearest_cluster(delta, clusters, global) == best);
  }
}

TEST_CASE("assignment is invariant to positive scaling of the delta") {
  const auto layout = vec_layout(4);
  Rng rng(13);
  const FlatWeights global(layout, 0.0);
  std::vector<ClusterModel> clusters;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> w(4);
    for (double& v : w) v = rng.normal();
    clusters.push_back(toy_cluster(k, layout, w));
  }
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> d(4);
    for (double& v : d) v = rng.normal();
    const FlatWeights delta(layout, d);
    const int base = find_nearest_cluster(delta, clusters, global);
    for (double c : {1e-9, 0.5, 2.5, 1e9}) {
      CHECK(find_nearest_cluster(scale(delta, c), clusters, global) == base);
    }
  }
}

TEST_CASE("literal similarity compares against absolute weights") {
  const auto layout = vec_layout(2);
  const FlatWeights global(layout, std::vector<double>{10.0, 0.0});
  std::vector<ClusterModel> clusters{
      toy_cluster(0, layout, {11.0, 0.0}),  // direction (1,0); literal (11,0)
      toy_cluster(1, layout, {9.0, 1.0}),   // direction (-1,1); literal (9,1)
  };
  const FlatWeights delta(layout, std::vector<double>{-1.0, 1.0});
  CHECK(find_nearest_cluster(delta, clusters, global, false) == 1);
  // literally, (9,1) is still more aligned with (-1,1) than (11,0) is;
  // use a delta pointing along +x to flip the literal choice
  const FlatWeights toward_x(layout, std::vector<double>{1.0, 0.0});
  CHECK(find_nearest_cluster(toward_x, clusters, global, false) == 0);
  CHECK(find_nearest_cluster(toward_x, clusters, global, true) == 0);
}

TEST_CASE("an all-normal predictor on all-normal data scores perfectly") {
  // zero weights predict class 0 everywhere
  const FlatWeights zeros(kSpec.layout(), 0.0);
  const ClientDataset client = make_client("t", 5, 21, 0);
  const ClientEval eval = evaluate(zeros, kSpec, client);
  CHECK(eval.accuracy == 1.0);
  CHECK(eval.confusion.sensitivity(0) == 1.0);
  CHECK(eval.confusion.count(0, 0) == 5);
}

TEST_CASE("evaluate does not mutate the model") {
  const FlatWeights model = init_weights(kSpec, 22);
  const FlatWeights copy = model;
  evaluate(model, kSpec, make_client("t", 4, 23));
  CHECK(bit_equal(model, copy));
}

TEST_CASE("hand-built confusion matrix metrics") {
  // [[2,0],[1,1]]
  ConfusionMatrix cm(2);
  cm.add(0, 0);
  cm.add(0, 0);
  cm.add(1, 0);
  cm.add(1, 1);
  CHECK(cm.sensitivity(0) == 1.0);
  CHECK(cm.sensitivity(1) == 0.5);
  CHECK(cm.specificity(0) == 0.5);
  CHECK(cm.specificity(1) == 1.0);
  CHECK(cm.accuracy() == doctest::Approx(0.75));
}

TEST_CASE("metrics match the per-sample counting oracle exactly") {
  Rng rng(30);
  for (int trial = 0; trial < 40; ++trial) {
    const int classes = trial % 2 == 0 ? 3 : 2;
    const std::size_t n = 1 + rng.uniform_below(200);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.uniform_below(classes));
      pred[i] = static_cast<int>(rng.uniform_below(classes));
    }
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < n; ++i) cm.add(truth[i], pred[i]);

    const oracle::CountedMetrics counted = oracle::count_metrics(truth, pred, classes);
    CHECK(cm.accuracy() == counted.accuracy);
    for (int c = 0; c < classes; ++c) {
      CHECK(cm.sensitivity(c) == counted.sensitivity[c]);
      CHECK(cm.specificity(c) == counted.specificity[c]);
      CHECK(cm.sensitivity(c) >= 0.0);
      CHECK(cm.sensitivity(c) <= 1.0);
      CHECK(cm.specificity(c) >= 0.0);
      CHECK(cm.specificity(c) <= 1.0);
    }
  }
}

TEST_CASE("balanced random predictions land near chance accuracy") {
  Rng rng(40);
  const int classes = 3;
  const std::size_t n = 9000;
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < n; ++i) {
    cm.add(static_cast<int>(rng.uniform_below(classes)),
           static_cast<int>(rng.uniform_below(classes)));
  }
  const double expected = 1.0 / classes;
  const double sigma = std::sqrt(expected * (1 - expected) / static_cast<double>(n));
  CHECK(std::abs(cm.accuracy() - expected) < 3.0 * sigma);
}

TEST_CASE("test_all over a single client equals a direct evaluation") {
  const FlatWeights global = init_weights(kSpec, 50);
  std::vector<ClusterModel> clusters{ClusterModel{0, {}, init_weights(kSpec, 51)}};
  const std::vector<ClientDataset> queue{make_client("t", 4, 52)};

  PersonalizationConfig cfg;
  cfg.registration_rounds = 2;
  const EvalReport report = test_all(queue, clusters, global, kSpec, kOpt, cfg);
  const ClientEval direct = evaluate(clusters[0].weights, kSpec, queue[0]);
  REQUIRE(report.per_client.size() == 1);
  CHECK(report.per_client[0].accuracy == direct.accuracy);
  CHECK(report.mean_client_accuracy == direct.accuracy);
  CHECK(report.pooled_accuracy == direct.accuracy);
  CHECK(report.per_client[0].assigned_cluster == 0);
}

TEST_CASE("per-client average and pooled accuracy differ for uneven clients") {
  // zero weights predict class 0; client a: one class-0 sample (accuracy 1),
  // client b: one class-0 and two class-1 samples (accuracy 1/3)
  const FlatWeights global(kSpec.layout(), 0.0);
  std::vector<ClusterModel> clusters{ClusterModel{0, {}, FlatWeights(kSpec.layout(), 0.0)}};

  ClientDataset a = make_client("a", 1, 60, 0);
  ClientDataset b = make_client("b", 3, 61, 1);
  b.samples[0].label = 0;
  const std::vector<ClientDataset> queue{a, b};

  PersonalizationConfig cfg;
  cfg.registration_rounds = 1;
  const EvalReport report = test_all(queue, clusters, global, kSpec, {0.0, 0.5}, cfg);
  CHECK(report.mean_client_accuracy == doctest::Approx((1.0 + 1.0 / 3.0) / 2.0));
  CHECK(report.pooled_accuracy == doctest::Approx(0.5));
}

TEST_CASE("test_all validates its inputs") {
  const FlatWeights global = init_weights(kSpec, 70);
  std::vector<ClusterModel> clusters{ClusterModel{0, {}, global}};
  PersonalizationConfig cfg;
  CHECK_THROWS_AS(test_all({}, clusters, global, kSpec, kOpt, cfg), DataError);
  const std::vector<ClientDataset> queue{make_client("t", 2, 71)};
  CHECK_THROWS_AS(test_all(queue, {}, global, kSpec, kOpt, cfg), DataError);
}

TEST_CASE("registration and evaluation stay out of the training phases") {
  AccessLedger::instance().reset();
  const FlatWeights global = init_weights(kSpec, 80);
  std::vector<ClusterModel> clusters{ClusterModel{0, {}, init_weights(kSpec, 81)}};
  const std::vector<ClientDataset> queue{make_client("t", 3, 82)};

  PersonalizationConfig cfg;
  cfg.registration_rounds = 2;
  test_all(queue, clusters, global, kSpec, kOpt, cfg);

  const auto& ledger = AccessLedger::instance();
  for (const Sample& s : queue[0].samples) {
    CHECK(ledger.accessed(DataPhase::kRegistration).count(s.id) == 1);
    CHECK(ledger.accessed(DataPhase::kEvaluation).count(s.id) == 1);
    CHECK(ledger.accessed(DataPhase::kFedAvg).count(s.id) == 0);
    CHECK(ledger.accessed(DataPhase::kClusterDeltas).count(s.id) == 0);
    CHECK(ledger.accessed(DataPhase::kClusterTrain).count(s.id) == 0);
  }
}

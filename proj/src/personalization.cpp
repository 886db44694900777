#include "pfcm/personalization.hpp"

#include <algorithm>

#include "pfcm/access_ledger.hpp"
#include "pfcm/errors.hpp"

namespace pfcm {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw ConfigError("ConfusionMatrix: need at least one class");
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
    throw DataError("ConfusionMatrix: class index out of range");
  }
  ++counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
}

std::int64_t ConfusionMatrix::count(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts_) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (classes_ == 0) {
    *this = other;
    return *this;
  }
  if (other.classes_ != classes_) throw ShapeError("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

double ConfusionMatrix::accuracy() const {
  const std::int64_t t = total();
  if (t == 0) throw DataError("ConfusionMatrix: no samples");
  std::int64_t trace = 0;
  for (int c = 0; c < classes_; ++c) trace += count(c, c);
  return static_cast<double>(trace) / static_cast<double>(t);
}

double ConfusionMatrix::sensitivity(int cls) const {
  const std::int64_t tp = count(cls, cls);
  std::int64_t row = 0;
  for (int p = 0; p < classes_; ++p) row += count(cls, p);
  if (row == 0) return 1.0;  // nothing of this class to miss
  return static_cast<double>(tp) / static_cast<double>(row);
}

double ConfusionMatrix::specificity(int cls) const {
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  for (int t = 0; t < classes_; ++t) {
    if (t == cls) continue;
    for (int p = 0; p < classes_; ++p) {
      if (p == cls) {
        fp += count(t, p);
      } else {
        tn += count(t, p);
      }
    }
  }
  if (tn + fp == 0) return 1.0;  // no negatives to misclassify
  return static_cast<double>(tn) / static_cast<double>(tn + fp);
}

TestRegistration register_client(const ClientDataset& client, const FlatWeights& global,
                                 const CnnSpec& spec, const OptimizerConfig& opt,
                                 const PersonalizationConfig& cfg) {
  if (client.samples.empty()) {
    throw DataError("register_client: client " + client.client_id + " has no data");
  }
  if (cfg.registration_rounds < 1) {
    throw ConfigError("register_client: need at least one registration round");
  }
  DataPhaseScope phase(DataPhase::kRegistration);
  FlatWeights weights = global;
  for (int round = 0; round < cfg.registration_rounds; ++round) {
    weights = train_on_client(weights, client, spec, cfg.local_epochs, opt, cfg.batch_size);
  }
  TestRegistration out;
  out.client_id = client.client_id;
  out.delta = subtract(weights, global);
  out.trained = std::move(weights);
  return out;
}

int find_nearest_cluster(const FlatWeights& delta, std::span<const ClusterModel> clusters,
                         const FlatWeights& global, bool literal_similarity,
                         std::vector<std::string>* warnings) {
  if (clusters.empty()) throw DataError("find_nearest_cluster: no cluster models");

  int best = -1;
  double best_sim = 0.0;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const FlatWeights direction = literal_similarity
                                      ? clusters[k].weights
                                      : subtract(clusters[k].weights, global);
    const auto sim = cosine_similarity(delta.values(), direction.values());
    if (!sim) continue;
    if (best < 0 || *sim > best_sim) {
      best = static_cast<int>(k);
      best_sim = *sim;
    }
  }
  if (best < 0) {
    if (warnings) {
      warnings->push_back(
          "all cosine similarities undefined (zero-norm vectors); assigning cluster 0");
    }
    return 0;
  }
  return best;
}

ClientEval evaluate(const FlatWeights& weights, const CnnSpec& spec, const ClientDataset& client) {
  if (client.samples.empty()) {
    throw DataError("evaluate: client " + client.client_id + " has no data");
  }
  DataPhaseScope phase(DataPhase::kEvaluation);
  const Tensor features = batch_features(client);
  const std::vector<int> labels = batch_labels(client);
  const std::vector<int> preds = predict(weights, spec, features);

  ClientEval out;
  out.client_id = client.client_id;
  out.confusion = ConfusionMatrix(spec.num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) out.confusion.add(labels[i], preds[i]);
  out.accuracy = out.confusion.accuracy();
  return out;
}

EvalReport report_from_evals(std::vector<ClientEval> evals, int num_classes) {
  if (evals.empty()) throw DataError("report: no client evaluations");
  EvalReport report;
  report.pooled = ConfusionMatrix(num_classes);
  double acc_sum = 0.0;
  for (const ClientEval& e : evals) {
    acc_sum += e.accuracy;
    report.pooled += e.confusion;
  }
  report.mean_client_accuracy = acc_sum / static_cast<double>(evals.size());
  report.pooled_accuracy = report.pooled.accuracy();
  for (int c = 0; c < num_classes; ++c) {
    report.sensitivity.push_back(report.pooled.sensitivity(c));
    report.specificity.push_back(report.pooled.specificity(c));
  }
  double sens = 0.0, spec = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    sens += report.sensitivity[c];
    spec += report.specificity[c];
  }
  report.mean_sensitivity = sens / num_classes;
  report.mean_specificity = spec / num_classes;
  report.per_client = std::move(evals);
  return report;
}

EvalReport test_all(std::span<const ClientDataset> test_clients,
                    std::span<const ClusterModel> clusters, const FlatWeights& global,
                    const CnnSpec& spec, const OptimizerConfig& opt,
                    const PersonalizationConfig& cfg, std::vector<std::string>* warnings) {
  if (test_clients.empty()) throw DataError("test_all: empty test queue");
  if (clusters.empty()) throw DataError("test_all: no cluster models");

  std::vector<ClientEval> evals;
  for (const ClientDataset* client : sorted_by_id(test_clients)) {
    const TestRegistration reg = register_client(*client, global, spec, opt, cfg);
    const int idx =
        find_nearest_cluster(reg.delta, clusters, global, cfg.literal_similarity, warnings);
    ClientEval eval = evaluate(clusters[idx].weights, spec, *client);
    eval.assigned_cluster = idx;
    evals.push_back(std::move(eval));
  }
  return report_from_evals(std::move(evals), spec.num_classes);
}

}  // namespace pfcm

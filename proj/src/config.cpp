#include "pfcm/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "pfcm/errors.hpp"
#include "pfcm/rng.hpp"
#include "pfcm/text.hpp"

namespace pfcm {

namespace {

int to_int(const std::string& key, const std::string& value) {
  const auto v = parse_int(value);
  if (!v) throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return static_cast<int>(*v);
}

double to_double(const std::string& key, const std::string& value) {
  const auto v = parse_double(value);
  if (!v) throw ConfigError(key + ": expected a number, got '" + value + "'");
  return *v;
}

bool to_bool(const std::string& key, const std::string& value) {
  const auto v = parse_bool(value);
  if (!v) throw ConfigError(key + ": expected true/false, got '" + value + "'");
  return *v;
}

DistanceMetric to_metric(const std::string& value) {
  if (value == "cosine") return DistanceMetric::kCosine;
  if (value == "euclidean") return DistanceMetric::kEuclidean;
  throw ConfigError("cluster.metric: expected cosine or euclidean, got '" + value + "'");
}

Linkage to_linkage(const std::string& value) {
  if (value == "average") return Linkage::kAverage;
  if (value == "single") return Linkage::kSingle;
  if (value == "complete") return Linkage::kComplete;
  throw ConfigError("cluster.linkage: expected average/single/complete, got '" + value + "'");
}

std::string metric_name(DistanceMetric m) {
  return m == DistanceMetric::kCosine ? "cosine" : "euclidean";
}

std::string linkage_name(Linkage l) {
  switch (l) {
    case Linkage::kSingle: return "single";
    case Linkage::kComplete: return "complete";
    default: return "average";
  }
}

}  // namespace

CutCriterion parse_cut_criterion(const std::string& text) {
  if (text == "gap") return CutCriterion::largest_gap();
  if (text.starts_with("k=")) {
    const auto k = parse_int(text.substr(2));
    if (!k || *k < 1) throw ConfigError("cluster.cut: bad cluster count in '" + text + "'");
    return CutCriterion::clusters(static_cast<int>(*k));
  }
  if (text.starts_with("tau=")) {
    const auto tau = parse_double(text.substr(4));
    if (!tau || *tau < 0.0) throw ConfigError("cluster.cut: bad threshold in '" + text + "'");
    return CutCriterion::threshold(*tau);
  }
  throw ConfigError("cluster.cut: expected gap, k=<n> or tau=<x>, got '" + text + "'");
}

std::string format_cut_criterion(const CutCriterion& c) {
  switch (c.kind) {
    case CutCriterion::Kind::kClusterCount: return "k=" + std::to_string(c.k);
    case CutCriterion::Kind::kDistanceThreshold: return "tau=" + format_double(c.tau);
    default: return "gap";
  }
}

void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "data") c.data_csv = value;
  else if (key == "out") c.out_dir = value;
  else if (key == "seed") {
    const auto v = parse_int(value);
    if (!v || *v < 0) throw ConfigError("seed: expected a non-negative integer");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  else if (key == "classes") {
    c.num_classes = to_int(key, value);
    if (c.num_classes != 2 && c.num_classes != 3) throw ConfigError("classes: must be 2 or 3");
  }
  else if (key == "split.fraction") c.split_fraction = to_double(key, value);
  else if (key == "model.conv1_channels") c.model.conv1_channels = to_int(key, value);
  else if (key == "model.conv2_channels") c.model.conv2_channels = to_int(key, value);
  else if (key == "model.kernel_side") c.model.kernel_side = to_int(key, value);
  else if (key == "model.fc_hidden") c.model.fc_hidden = to_int(key, value);
  else if (key == "opt.lr") c.opt.learning_rate = to_double(key, value);
  else if (key == "opt.momentum") c.opt.momentum = to_double(key, value);
  else if (key == "fed.rounds") c.fed.rounds = to_int(key, value);
  else if (key == "fed.local_epochs") c.fed.local_epochs = to_int(key, value);
  else if (key == "fed.server_lr") c.fed.server_lr = to_double(key, value);
  else if (key == "fed.batch_size") c.fed.batch_size = to_int(key, value);
  else if (key == "fed.sample_weighted") c.fed.sample_weighted = to_bool(key, value);
  else if (key == "cluster.rounds") c.clustering.rounds = to_int(key, value);
  else if (key == "cluster.metric") c.clustering.metric = to_metric(value);
  else if (key == "cluster.linkage") c.clustering.linkage = to_linkage(value);
  else if (key == "cluster.cut") c.clustering.cut_criterion = parse_cut_criterion(value);
  else if (key == "cluster.last_layer_only") c.clustering.last_layer_only = to_bool(key, value);
  else if (key == "test.rounds") c.personalization.rounds = to_int(key, value);
  else if (key == "test.literal_similarity") c.personalization.literal_similarity = to_bool(key, value);
  else if (key == "synth.clients") c.synth.num_clients = to_int(key, value);
  else if (key == "synth.samples_min") c.synth.samples_per_client_min = to_int(key, value);
  else if (key == "synth.samples_max") c.synth.samples_per_client_max = to_int(key, value);
  else if (key == "synth.groups") c.synth.num_latent_groups = to_int(key, value);
  else if (key == "synth.label_skew") c.synth.label_skew = to_double(key, value);
  else if (key == "synth.feature_shift") c.synth.feature_shift_scale = to_double(key, value);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  ExperimentConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    apply_config_entry(config, key, value);
  }
  return config;
}

void resolve_config(ExperimentConfig& c) {
  if (c.personalization.rounds <= 0) c.personalization.rounds = 5 * c.fed.local_epochs;
  c.model.num_classes = c.num_classes;
  c.model.validate();
  if (c.fed.rounds < 0) throw ConfigError("fed.rounds: must be non-negative");
  if (c.fed.local_epochs < 1) throw ConfigError("fed.local_epochs: must be at least 1");
  if (c.fed.server_lr <= 0.0) throw ConfigError("fed.server_lr: must be positive");
  if (c.clustering.rounds < 0) throw ConfigError("cluster.rounds: must be non-negative");
  if (!(c.split_fraction >= 0.0 && c.split_fraction <= 1.0)) {
    throw ConfigError("split.fraction: must lie in [0,1]");
  }
  if (c.data_csv.empty()) {
    c.synth.seed = sub_seed(c.seed, "synth");
    c.synth.validate();
  }
  if (c.out_dir.empty()) throw ConfigError("out: output directory must be set");
}

PersonalizationConfig ExperimentConfig::personalization_config() const {
  PersonalizationConfig p;
  p.registration_rounds = personalization.rounds > 0 ? personalization.rounds
                                                     : 5 * fed.local_epochs;
  p.local_epochs = fed.local_epochs;
  p.batch_size = fed.batch_size;
  p.literal_similarity = personalization.literal_similarity;
  return p;
}

std::string serialize_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  kv["data"] = c.data_csv;
  kv["out"] = c.out_dir;
  kv["seed"] = std::to_string(c.seed);
  kv["classes"] = std::to_string(c.num_classes);
  kv["split.fraction"] = format_double(c.split_fraction);
  kv["model.conv1_channels"] = std::to_string(c.model.conv1_channels);
  kv["model.conv2_channels"] = std::to_string(c.model.conv2_channels);
  kv["model.kernel_side"] = std::to_string(c.model.kernel_side);
  kv["model.fc_hidden"] = std::to_string(c.model.fc_hidden);
  kv["opt.lr"] = format_double(c.opt.learning_rate);
  kv["opt.momentum"] = format_double(c.opt.momentum);
  kv["fed.rounds"] = std::to_string(c.fed.rounds);
  kv["fed.local_epochs"] = std::to_string(c.fed.local_epochs);
  kv["fed.server_lr"] = format_double(c.fed.server_lr);
  kv["fed.batch_size"] = std::to_string(c.fed.batch_size);
  kv["fed.sample_weighted"] = c.fed.sample_weighted ? "true" : "false";
  kv["cluster.rounds"] = std::to_string(c.clustering.rounds);
  kv["cluster.metric"] = metric_name(c.clustering.metric);
  kv["cluster.linkage"] = linkage_name(c.clustering.linkage);
  kv["cluster.cut"] = format_cut_criterion(c.clustering.cut_criterion);
  kv["cluster.last_layer_only"] = c.clustering.last_layer_only ? "true" : "false";
  kv["test.rounds"] = std::to_string(c.personalization.rounds);
  kv["test.literal_similarity"] = c.personalization.literal_similarity ? "true" : "false";
  kv["synth.clients"] = std::to_string(c.synth.num_clients);
  kv["synth.samples_min"] = std::to_string(c.synth.samples_per_client_min);
  kv["synth.samples_max"] = std::to_string(c.synth.samples_per_client_max);
  kv["synth.groups"] = std::to_string(c.synth.num_latent_groups);
  kv["synth.label_skew"] = format_double(c.synth.label_skew);
  kv["synth.feature_shift"] = format_double(c.synth.feature_shift_scale);

  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  return out.str();
}

void write_resolved_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write resolved config to " + path.string());
  out << serialize_config(config);
}

}  // namespace pfcm

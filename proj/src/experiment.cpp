#include "pfcm/experiment.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfcm/checkpoint.hpp"
#include "pfcm/csv.hpp"
#include "pfcm/errors.hpp"
#include "pfcm/rng.hpp"
#include "pfcm/text.hpp"

namespace pfcm {

namespace fs = std::filesystem;

LoadedData load_experiment_data(const ExperimentConfig& config) {
  LoadedData out;
  std::vector<RawRecord> records;
  if (!config.data_csv.empty()) {
    records = load_records_csv(config.data_csv);
  } else {
    SyntheticData synth = generate_synthetic(config.synth, config.scheme());
    records = std::move(synth.records);
    out.groups = std::move(synth.groups);
  }
  out.data = prepare_dataset(records, config.scheme(), config.split_fraction,
                             sub_seed(config.seed, "split"));
  return out;
}

TrainResult train_pipeline(const ExperimentConfig& config) {
  TrainResult result;
  result.loaded = load_experiment_data(config);
  const PreparedData& data = result.loaded.data;

  FedAvgResult fed = run_fedavg(data.train_clients, config.model, config.opt, config.fed,
                                config.seed);
  result.global = std::move(fed.global);
  result.fed_reports = std::move(fed.reports);

  const DeltaMatrix deltas =
      compute_deltas(result.global.weights, data.train_clients, config.model,
                     config.fed.local_epochs, config.opt, config.fed.batch_size);
  DistanceOptions dist_options{config.clustering.metric, config.clustering.last_layer_only};
  const auto distances = pairwise_distance(deltas, dist_options, &result.warnings);

  std::vector<std::string> leaf_ids;
  for (const ClientUpdate& row : deltas.rows) leaf_ids.push_back(row.client_id);
  result.dendrogram = agglomerate(distances, config.clustering.linkage, std::move(leaf_ids));
  result.partition = cut(result.dendrogram, config.clustering.cut_criterion);

  FedConfig cluster_cfg = config.fed;
  cluster_cfg.rounds = config.clustering.rounds;
  ClusterTrainResult trained =
      train_clusters(result.partition, result.global.weights, data.train_clients, config.model,
                     config.opt, cluster_cfg, config.fed.rounds + 1);
  result.clusters = std::move(trained.models);
  result.cluster_reports = std::move(trained.reports);
  return result;
}

EvalReport evaluate_pfcm(const TrainResult& result, const ExperimentConfig& config) {
  std::vector<std::string> warnings;
  return test_all(result.loaded.data.test_clients, result.clusters, result.global.weights,
                  config.model, config.opt, config.personalization_config(), &warnings);
}

EvalReport evaluate_global_baseline(const TrainResult& result, const ExperimentConfig& config) {
  const auto& test_clients = result.loaded.data.test_clients;
  if (test_clients.empty()) throw DataError("baseline evaluation: no test clients");
  std::vector<ClientEval> evals;
  for (const ClientDataset* client : sorted_by_id(test_clients)) {
    evals.push_back(evaluate(result.global.weights, config.model, *client));
  }
  return report_from_evals(std::move(evals), config.model.num_classes);
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_rounds_csv(const TrainResult& result, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "model,round,loss,accuracy\n";
  for (const RoundReport& r : result.fed_reports) {
    out << "global," << r.round << "," << format_double(r.mean_train_loss) << ","
        << format_double(r.probe_accuracy) << "\n";
  }
  for (std::size_t k = 0; k < result.cluster_reports.size(); ++k) {
    for (const RoundReport& r : result.cluster_reports[k]) {
      out << "cluster_" << k << "," << r.round << "," << format_double(r.mean_train_loss) << ","
          << format_double(r.probe_accuracy) << "\n";
    }
  }
}

void write_dendrogram_csv(const Dendrogram& dendrogram, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "node_a,node_b,distance,new_node_id\n";
  for (const Merge& m : dendrogram.merges) {
    out << m.node_a << "," << m.node_b << "," << format_double(m.distance) << ","
        << m.new_node_id << "\n";
  }
}

void write_assignments_csv(const std::vector<ClusterModel>& clusters, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "client_id,cluster_id\n";
  std::vector<std::pair<std::string, int>> rows;
  for (const ClusterModel& c : clusters) {
    for (const std::string& member : c.member_ids) rows.emplace_back(member, c.cluster_id);
  }
  std::sort(rows.begin(), rows.end());
  for (const auto& [client, cluster] : rows) out << client << "," << cluster << "\n";
}

void write_split_csv(const PreparedData& data, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "client_id,role\n";
  for (const ClientDataset& c : data.train_clients) out << c.client_id << ",train\n";
  for (const ClientDataset& c : data.test_clients) out << c.client_id << ",test\n";
}

void write_norm_stats_csv(const NormStats& stats, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "feature,min,max\n";
  for (int f = 0; f < kFeatureCount; ++f) {
    out << f << "," << format_double(stats.min[f]) << "," << format_double(stats.max[f]) << "\n";
  }
}

nlohmann::ordered_json eval_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["num_classes"] = report.pooled.num_classes();
  j["mean_client_accuracy"] = report.mean_client_accuracy;
  j["pooled_accuracy"] = report.pooled_accuracy;
  j["mean_sensitivity"] = report.mean_sensitivity;
  j["mean_specificity"] = report.mean_specificity;
  j["sensitivity"] = report.sensitivity;
  j["specificity"] = report.specificity;
  nlohmann::ordered_json cm = nlohmann::ordered_json::array();
  for (int t = 0; t < report.pooled.num_classes(); ++t) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int p = 0; p < report.pooled.num_classes(); ++p) row.push_back(report.pooled.count(t, p));
    cm.push_back(row);
  }
  j["confusion_matrix"] = cm;
  nlohmann::ordered_json clients = nlohmann::ordered_json::array();
  for (const ClientEval& e : report.per_client) {
    nlohmann::ordered_json entry;
    entry["client_id"] = e.client_id;
    entry["cluster"] = e.assigned_cluster;
    entry["accuracy"] = e.accuracy;
    clients.push_back(entry);
  }
  j["per_client"] = clients;
  return j;
}

std::string class_label(int cls, int num_classes) {
  if (num_classes == 3) {
    switch (cls) {
      case 0: return "normal";
      case 1: return "mild";
      default: return "moderate-severe";
    }
  }
  return cls == 0 ? "normal-mild" : "moderate-severe";
}

}  // namespace

void write_eval_report(const EvalReport& report, const fs::path& dir, const std::string& stem) {
  ensure_dir(dir);
  {
    std::ofstream out(dir / (stem + ".json"));
    if (!out) throw DataError("cannot write eval json");
    out << eval_to_json(report).dump(2) << "\n";
  }
  {
    std::ofstream out(dir / (stem + ".csv"));
    if (!out) throw DataError("cannot write eval csv");
    out << "class,sensitivity,specificity\n";
    for (int c = 0; c < report.pooled.num_classes(); ++c) {
      out << class_label(c, report.pooled.num_classes()) << ","
          << format_double(report.sensitivity[c]) << "," << format_double(report.specificity[c])
          << "\n";
    }
    out << "mean," << format_double(report.mean_sensitivity) << ","
        << format_double(report.mean_specificity) << "\n";
    out << "accuracy," << format_double(report.mean_client_accuracy) << ",\n";
    out << "pooled_accuracy," << format_double(report.pooled_accuracy) << ",\n";
  }
  {
    std::ofstream out(dir / (stem + ".txt"));
    if (!out) throw DataError("cannot write eval txt");
    const int classes = report.pooled.num_classes();
    out << "final accuracy (per-client mean): " << format_double(report.mean_client_accuracy)
        << "\n";
    out << "pooled accuracy:                  " << format_double(report.pooled_accuracy) << "\n\n";
    out << "confusion matrix (rows = truth, columns = prediction):\n";
    for (int t = 0; t < classes; ++t) {
      out << "  " << class_label(t, classes) << ":";
      for (int p = 0; p < classes; ++p) out << " " << report.pooled.count(t, p);
      out << "\n";
    }
    out << "\nclass metrics:\n";
    for (int c = 0; c < classes; ++c) {
      out << "  " << class_label(c, classes)
          << ": sensitivity " << format_double(report.sensitivity[c])
          << ", specificity " << format_double(report.specificity[c]) << "\n";
    }
    out << "  mean: sensitivity " << format_double(report.mean_sensitivity) << ", specificity "
        << format_double(report.mean_specificity) << "\n";
  }
}

void cmd_synth(const ExperimentConfig& config) {
  const SyntheticData synth = generate_synthetic(config.synth, config.scheme());
  const fs::path dir(config.out_dir);
  ensure_dir(dir);
  save_records_csv(synth.records, dir / "synthetic.csv");
  save_groups_csv(synth.groups, dir / "groups.csv");
  write_resolved_config(config, dir / "config.resolved");
  std::cout << "wrote " << synth.records.size() << " records for " << config.synth.num_clients
            << " clients to " << (dir / "synthetic.csv").string() << "\n";
}

void cmd_train(const ExperimentConfig& config) {
  const TrainResult result = train_pipeline(config);
  const fs::path dir(config.out_dir);
  ensure_dir(dir / "checkpoints");

  write_resolved_config(config, dir / "config.resolved");
  write_rounds_csv(result, dir / "rounds.csv");
  write_dendrogram_csv(result.dendrogram, dir / "dendrogram.csv");
  write_assignments_csv(result.clusters, dir / "assignments.csv");
  write_split_csv(result.loaded.data, dir / "split.csv");
  write_norm_stats_csv(result.loaded.data.stats, dir / "norm_stats.csv");
  save_checkpoint(result.global.weights, dir / "checkpoints" / "global.ckpt");
  for (const ClusterModel& cluster : result.clusters) {
    save_checkpoint(cluster.weights,
                    dir / "checkpoints" / ("cluster_" + std::to_string(cluster.cluster_id) + ".ckpt"));
  }
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "trained global model for " << config.fed.rounds << " rounds and "
            << result.clusters.size() << " cluster models for " << config.clustering.rounds
            << " rounds; outputs in " << dir.string() << "\n";
}

void cmd_test(const ExperimentConfig& config) {
  const fs::path dir(config.out_dir);
  const fs::path ckpt_dir = dir / "checkpoints";
  if (!fs::exists(ckpt_dir / "global.ckpt")) {
    throw DataError("no checkpoints under " + ckpt_dir.string() + "; run train first");
  }
  const FlatWeights global = load_checkpoint(ckpt_dir / "global.ckpt");
  std::vector<ClusterModel> clusters;
  for (int k = 0;; ++k) {
    const fs::path path = ckpt_dir / ("cluster_" + std::to_string(k) + ".ckpt");
    if (!fs::exists(path)) break;
    clusters.push_back(ClusterModel{k, {}, load_checkpoint(path)});
  }
  if (clusters.empty()) throw DataError("no cluster checkpoints under " + ckpt_dir.string());

  const LoadedData loaded = load_experiment_data(config);
  std::vector<std::string> warnings;
  const EvalReport report =
      test_all(loaded.data.test_clients, clusters, global, config.model, config.opt,
               config.personalization_config(), &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  write_eval_report(report, dir, "eval");
  std::cout << "evaluated " << report.per_client.size()
            << " test clients; final accuracy " << format_double(report.mean_client_accuracy)
            << " (reports in " << dir.string() << ")\n";
}

void cmd_compare(const ExperimentConfig& config) {
  const TrainResult result = train_pipeline(config);
  const EvalReport pfcm = evaluate_pfcm(result, config);
  const EvalReport baseline = evaluate_global_baseline(result, config);

  const fs::path dir(config.out_dir);
  ensure_dir(dir);
  write_resolved_config(config, dir / "config.resolved");
  write_eval_report(pfcm, dir, "eval_pfcm");
  write_eval_report(baseline, dir, "eval_fedavg");
  {
    std::ofstream out(dir / "compare.csv");
    if (!out) throw DataError("cannot write compare.csv");
    out << "method,mean_client_accuracy,pooled_accuracy\n";
    out << "fedavg," << format_double(baseline.mean_client_accuracy) << ","
        << format_double(baseline.pooled_accuracy) << "\n";
    out << "pfcm," << format_double(pfcm.mean_client_accuracy) << ","
        << format_double(pfcm.pooled_accuracy) << "\n";
  }
  std::cout << "fedavg accuracy " << format_double(baseline.mean_client_accuracy)
            << " vs pfcm accuracy " << format_double(pfcm.mean_client_accuracy)
            << " on the same " << result.loaded.data.test_clients.size() << " test clients\n";
}

namespace {

ExperimentConfig build_config(const std::string& config_path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig config;
  if (!config_path.empty()) config = load_config_file(config_path);
  for (const auto& [key, value] : overrides) apply_config_entry(config, key, value);
  resolve_config(config);
  return config;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"federated-learning simulator with clustered per-client personalization"};
  app.require_subcommand(1);

  struct Flags {
    std::string config, data, out, cut, metric;
    std::int64_t seed = -1;
    int classes = 0, rounds = -1, cluster_rounds = -1;
    int clients = -1, groups = -1;
    double skew = -1.0, shift = -1.0;
  } flags;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "configuration file (key = value lines)");
    sub->add_option("--data", flags.data, "input data CSV (omit to use the synthetic source)");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "global seed");
    sub->add_option("--classes", flags.classes, "2 or 3 severity classes");
    sub->add_option("--rounds", flags.rounds, "global federation rounds");
    sub->add_option("--cluster-rounds", flags.cluster_rounds, "per-cluster training rounds");
    sub->add_option("--cut", flags.cut, "dendrogram cut: gap, k=<n> or tau=<x>");
    sub->add_option("--metric", flags.metric, "clustering metric: cosine or euclidean");
    sub->add_option("--clients", flags.clients, "synthetic client count");
    sub->add_option("--groups", flags.groups, "synthetic latent group count");
    sub->add_option("--skew", flags.skew, "synthetic label skew in [0,1]");
    sub->add_option("--shift", flags.shift, "synthetic feature shift scale");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
  CLI::App* train = app.add_subcommand("train", "run federated training and clustering");
  CLI::App* test = app.add_subcommand("test", "evaluate held-out clients against checkpoints");
  CLI::App* compare = app.add_subcommand("compare", "baseline-vs-personalized comparison");
  for (CLI::App* sub : {synth, train, test, compare}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    if (!flags.data.empty()) overrides.emplace_back("data", flags.data);
    if (!flags.out.empty()) overrides.emplace_back("out", flags.out);
    if (flags.seed >= 0) overrides.emplace_back("seed", std::to_string(flags.seed));
    if (flags.classes > 0) overrides.emplace_back("classes", std::to_string(flags.classes));
    if (flags.rounds >= 0) overrides.emplace_back("fed.rounds", std::to_string(flags.rounds));
    if (flags.cluster_rounds >= 0) {
      overrides.emplace_back("cluster.rounds", std::to_string(flags.cluster_rounds));
    }
    if (!flags.cut.empty()) overrides.emplace_back("cluster.cut", flags.cut);
    if (!flags.metric.empty()) overrides.emplace_back("cluster.metric", flags.metric);
    if (flags.clients > 0) overrides.emplace_back("synth.clients", std::to_string(flags.clients));
    if (flags.groups > 0) overrides.emplace_back("synth.groups", std::to_string(flags.groups));
    if (flags.skew >= 0.0) overrides.emplace_back("synth.label_skew", format_double(flags.skew));
    if (flags.shift >= 0.0) {
      overrides.emplace_back("synth.feature_shift", format_double(flags.shift));
    }

    const ExperimentConfig config = build_config(flags.config, overrides);
    if (synth->parsed()) cmd_synth(config);
    else if (train->parsed()) cmd_train(config);
    else if (test->parsed()) cmd_test(config);
    else cmd_compare(config);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace pfcm

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfcm/tensor.hpp"

namespace pfcm {

inline constexpr int kFeatureCount = 80;
inline constexpr int kGridSide = 9;
// 80 features plus one zero dummy cell appended as the last value
inline constexpr int kGridCells = kGridSide * kGridSide;
inline constexpr int kHamdMax = 50;

struct RawRecord {
  std::string subject_id;
  int visit_index = 0;
  std::array<double, kFeatureCount> features{};
  int hamd_score = 0;
};

enum class LabelMode { kThreeClass, kTwoClass };

struct LabelScheme {
  LabelMode mode = LabelMode::kThreeClass;
  int num_classes() const { return mode == LabelMode::kThreeClass ? 3 : 2; }
};

// Severity bins over the 0..50 score: [0,7] normal, [8,16] mild,
// [17,50] moderate-severe; two-class mode merges normal and mild.
int bin_hamd(int score, const LabelScheme& scheme);
// inclusive score range producing the given class; inverse of bin_hamd
std::pair<int, int> hamd_range_for_class(int cls, const LabelScheme& scheme);

struct Sample {
  std::uint64_t id = 0;
  std::array<double, kGridCells> matrix{};  // row-major 9x9 in [0,1], cell 80 fixed at 0
  int label = 0;
};

// One client's local samples; never shared across clients.
struct ClientDataset {
  std::string client_id;
  std::vector<Sample> samples;
};

struct SubjectRecords {
  std::string subject_id;
  std::vector<RawRecord> records;
};

// groups records by subject; subjects sorted by id, records by visit index
std::vector<SubjectRecords> partition_by_subject(std::span<const RawRecord> records);

// split at subject granularity; deterministic per seed
std::pair<std::vector<SubjectRecords>, std::vector<SubjectRecords>> split_train_test(
    std::vector<SubjectRecords> subjects, double train_fraction, std::uint64_t seed);

// per-feature min/max, a pure function of the training split
struct NormStats {
  std::array<double, kFeatureCount> min{};
  std::array<double, kFeatureCount> max{};

  bool operator==(const NormStats&) const = default;
};
NormStats compute_norm_stats(std::span<const SubjectRecords> train_subjects);

struct PreprocessCounters {
  std::size_t clamped = 0;  // values outside the training range
};

// min-max scale into [0,1] (clamping out-of-range values), append the zero
// dummy cell, reshape row-major to 9x9 and bin the label
Sample preprocess(const RawRecord& record, const NormStats& stats, const LabelScheme& scheme,
                  PreprocessCounters* counters = nullptr);

struct PreparedData {
  std::vector<ClientDataset> train_clients;
  std::vector<ClientDataset> test_clients;
  NormStats stats;
  LabelScheme scheme;
  PreprocessCounters counters;
};

// Partition by subject, split at subject granularity, compute normalization
// statistics from the training split only, then preprocess both splits.
// Sample ids are assigned sequentially over the canonical subject order.
PreparedData prepare_dataset(std::span<const RawRecord> records, const LabelScheme& scheme,
                             double train_fraction, std::uint64_t split_seed);

struct SyntheticSpec {
  int num_clients = 100;
  int samples_per_client_min = 3;
  int samples_per_client_max = 5;
  int num_latent_groups = 3;
  double label_skew = 0.0;  // 0 = identically distributed clients
  double feature_shift_scale = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  std::vector<RawRecord> records;
  // latent group per client, emitted for cluster-quality evaluation only
  std::vector<std::pair<std::string, int>> groups;
};

// Clients belong to balanced latent groups. A group skews its clients' label
// distribution towards class (group mod num_classes) and shifts the feature
// means; both effects scale with label_skew so that label_skew = 0 yields
// identically distributed clients.
SyntheticData generate_synthetic(const SyntheticSpec& spec, const LabelScheme& scheme);

// Training-batch assembly. This is the single point where sample values leave
// a ClientDataset, so the access ledger sees every consumer.
Tensor batch_features(const ClientDataset& client);
std::vector<int> batch_labels(const ClientDataset& client);

std::vector<const ClientDataset*> sorted_by_id(std::span<const ClientDataset> clients);

}  // namespace pfcm

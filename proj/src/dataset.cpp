#include "pfcm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "pfcm/access_ledger.hpp"
#include "pfcm/errors.hpp"
#include "pfcm/rng.hpp"

namespace pfcm {

int bin_hamd(int score, const LabelScheme& scheme) {
  if (score < 0 || score > kHamdMax) {
    throw DataError("severity score " + std::to_string(score) + " outside [0," +
                    std::to_string(kHamdMax) + "]");
  }
  const int three = score <= 7 ? 0 : (score <= 16 ? 1 : 2);
  if (scheme.mode == LabelMode::kThreeClass) return three;
  return three == 2 ? 1 : 0;
}

std::pair<int, int> hamd_range_for_class(int cls, const LabelScheme& scheme) {
  if (cls < 0 || cls >= scheme.num_classes()) {
    throw DataError("class " + std::to_string(cls) + " outside the label scheme");
  }
  if (scheme.mode == LabelMode::kThreeClass) {
    switch (cls) {
      case 0: return {0, 7};
      case 1: return {8, 16};
      default: return {17, kHamdMax};
    }
  }
  return cls == 0 ? std::pair<int, int>{0, 16} : std::pair<int, int>{17, kHamdMax};
}

std::vector<SubjectRecords> partition_by_subject(std::span<const RawRecord> records) {
  std::map<std::string, std::vector<RawRecord>> by_subject;
  for (const RawRecord& r : records) {
    if (r.subject_id.empty()) throw DataError("record with empty subject_id");
    by_subject[r.subject_id].push_back(r);
  }
  std::vector<SubjectRecords> out;
  out.reserve(by_subject.size());
  for (auto& [subject, recs] : by_subject) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const RawRecord& a, const RawRecord& b) { return a.visit_index < b.visit_index; });
    out.push_back(SubjectRecords{subject, std::move(recs)});
  }
  return out;
}

std::pair<std::vector<SubjectRecords>, std::vector<SubjectRecords>> split_train_test(
    std::vector<SubjectRecords> subjects, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("split fraction must lie in [0,1]");
  }
  const std::size_t n = subjects.size();
  const std::size_t train_n = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<SubjectRecords> train, test;
  for (std::size_t i = 0; i < n; ++i) {
    (i < train_n ? train : test).push_back(std::move(subjects[order[i]]));
  }
  const auto by_id = [](const SubjectRecords& a, const SubjectRecords& b) {
    return a.subject_id < b.subject_id;
  };
  std::sort(train.begin(), train.end(), by_id);
  std::sort(test.begin(), test.end(), by_id);
  return {std::move(train), std::move(test)};
}

NormStats compute_norm_stats(std::span<const SubjectRecords> train_subjects) {
  NormStats stats;
  stats.min.fill(std::numeric_limits<double>::infinity());
  stats.max.fill(-std::numeric_limits<double>::infinity());
  std::size_t count = 0;
  for (const SubjectRecords& subject : train_subjects) {
    for (const RawRecord& r : subject.records) {
      ++count;
      for (int f = 0; f < kFeatureCount; ++f) {
        stats.min[f] = std::min(stats.min[f], r.features[f]);
        stats.max[f] = std::max(stats.max[f], r.features[f]);
      }
    }
  }
  if (count == 0) throw DataError("cannot compute normalization statistics without records");
  return stats;
}

Sample preprocess(const RawRecord& record, const NormStats& stats, const LabelScheme& scheme,
                  PreprocessCounters* counters) {
  Sample s;
  for (int f = 0; f < kFeatureCount; ++f) {
    const double lo = stats.min[f];
    const double hi = stats.max[f];
    double v;
    if (hi <= lo) {
      v = 0.0;  // constant feature carries no information
    } else {
      v = (record.features[f] - lo) / (hi - lo);
      if (v < 0.0 || v > 1.0) {
        v = std::clamp(v, 0.0, 1.0);
        if (counters) ++counters->clamped;
      }
    }
    s.matrix[f] = v;
  }
  s.matrix[kGridCells - 1] = 0.0;
  s.label = bin_hamd(record.hamd_score, scheme);
  return s;
}

PreparedData prepare_dataset(std::span<const RawRecord> records, const LabelScheme& scheme,
                             double train_fraction, std::uint64_t split_seed) {
  std::vector<SubjectRecords> subjects = partition_by_subject(records);
  if (subjects.empty()) throw DataError("dataset contains no records");
  auto [train_subjects, test_subjects] =
      split_train_test(std::move(subjects), train_fraction, split_seed);
  if (train_subjects.empty()) throw DataError("training split is empty");

  PreparedData out;
  out.scheme = scheme;
  out.stats = compute_norm_stats(train_subjects);

  std::uint64_t next_id = 0;
  const auto build = [&](const std::vector<SubjectRecords>& side) {
    std::vector<ClientDataset> clients;
    clients.reserve(side.size());
    for (const SubjectRecords& subject : side) {
      ClientDataset client;
      client.client_id = subject.subject_id;
      client.samples.reserve(subject.records.size());
      for (const RawRecord& r : subject.records) {
        Sample s = preprocess(r, out.stats, scheme, &out.counters);
        s.id = next_id++;
        client.samples.push_back(s);
      }
      clients.push_back(std::move(client));
    }
    return clients;
  };
  out.train_clients = build(train_subjects);
  out.test_clients = build(test_subjects);
  return out;
}

void SyntheticSpec::validate() const {
  if (num_clients <= 0 || num_clients > 9999) {
    throw ConfigError("synthetic: num_clients must lie in [1,9999]");
  }
  if (num_latent_groups <= 0 || num_latent_groups > num_clients) {
    throw ConfigError("synthetic: need 1 <= groups <= clients");
  }
  if (samples_per_client_min < 1 || samples_per_client_max < samples_per_client_min) {
    throw ConfigError("synthetic: bad samples-per-client range");
  }
  if (!(label_skew >= 0.0 && label_skew <= 1.0)) {
    throw ConfigError("synthetic: label_skew must lie in [0,1]");
  }
  if (feature_shift_scale < 0.0) {
    throw ConfigError("synthetic: feature_shift_scale must be non-negative");
  }
}

namespace {

constexpr double kNoiseSigma = 0.25;
constexpr double kClassSignal = 0.5;  // amplitude of the class-conditional patterns

// Low-discrepancy draw from the skewed categorical: each client receives the
// target label distribution up to integer rounding, so label_skew 0 gives
// genuinely balanced local label sets instead of noisy small-sample ones.
std::vector<int> allocate_labels(int samples, int classes, int dominant, double skew, Rng& rng) {
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  std::vector<std::pair<double, int>> fractions;  // (-fraction, class) for stable ordering
  int assigned = 0;
  for (int c = 0; c < classes; ++c) {
    const double p = (1.0 - skew) / classes + (c == dominant ? skew : 0.0);
    const double target = samples * p;
    counts[c] = static_cast<int>(target);
    assigned += counts[c];
    fractions.emplace_back(-(target - counts[c]), c);
  }
  std::sort(fractions.begin(), fractions.end());
  for (int r = 0; r < samples - assigned; ++r) ++counts[fractions[r].second];  // remainder < classes

  std::vector<int> labels;
  for (int c = 0; c < classes; ++c) labels.insert(labels.end(), counts[c], c);
  rng.shuffle(labels);
  return labels;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, const LabelScheme& scheme) {
  spec.validate();
  const int classes = scheme.num_classes();
  const int groups = spec.num_latent_groups;

  // Class-conditional feature patterns plus concept shift: with probability
  // label_skew a sample swaps its class pattern for pattern
  // (label - group) mod C. The same label then looks different across groups,
  // and at high skew the groups' dominant-class samples collide on one shared
  // pattern that carries a different label per group, which no single global
  // model can resolve while a per-group model can. At skew 0 the swap never
  // fires and clients are identically distributed.
  std::vector<std::array<double, kFeatureCount>> class_pattern(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    Rng rng(sub_seed(spec.seed, "synth.class." + std::to_string(c)));
    for (int f = 0; f < kFeatureCount; ++f) class_pattern[c][f] = kClassSignal * rng.normal();
  }

  // additional per-group mean displacement, also gated by label_skew
  std::vector<std::array<double, kFeatureCount>> group_shift(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) {
    Rng rng(sub_seed(spec.seed, "synth.group." + std::to_string(g)));
    for (int f = 0; f < kFeatureCount; ++f) {
      group_shift[g][f] = spec.feature_shift_scale * spec.label_skew * rng.normal();
    }
  }

  SyntheticData out;
  for (int i = 0; i < spec.num_clients; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "c%04d", i);
    const std::string client_id(id);
    const int group = i % groups;
    out.groups.emplace_back(client_id, group);

    Rng rng(sub_seed(spec.seed, "synth.client." + client_id));
    const int samples = static_cast<int>(
        rng.uniform_int(spec.samples_per_client_min, spec.samples_per_client_max));
    const std::vector<int> labels =
        allocate_labels(samples, classes, group % classes, spec.label_skew, rng);
    for (int v = 0; v < samples; ++v) {
      const int label = labels[v];
      const bool shifted = rng.uniform01() < spec.label_skew;
      const int pattern = shifted ? (label - group % classes + classes) % classes : label;
      const auto [lo, hi] = hamd_range_for_class(label, scheme);
      RawRecord r;
      r.subject_id = client_id;
      r.visit_index = v;
      r.hamd_score = static_cast<int>(rng.uniform_int(lo, hi));
      for (int f = 0; f < kFeatureCount; ++f) {
        r.features[f] = class_pattern[pattern][f] + group_shift[group][f] +
                        kNoiseSigma * rng.normal();
      }
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

Tensor batch_features(const ClientDataset& client) {
  if (client.samples.empty()) {
    throw DataError("client " + client.client_id + " has no samples");
  }
  const std::size_t n = client.samples.size();
  Tensor batch({n, 1, kGridSide, kGridSide});
  AccessLedger& ledger = AccessLedger::instance();
  const DataPhase phase = DataPhaseScope::current();
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = client.samples[i];
    ledger.record(phase, s.id);
    std::copy(s.matrix.begin(), s.matrix.end(), batch.data() + i * kGridCells);
  }
  return batch;
}

std::vector<int> batch_labels(const ClientDataset& client) {
  std::vector<int> labels;
  labels.reserve(client.samples.size());
  for (const Sample& s : client.samples) labels.push_back(s.label);
  return labels;
}

std::vector<const ClientDataset*> sorted_by_id(std::span<const ClientDataset> clients) {
  std::vector<const ClientDataset*> out;
  out.reserve(clients.size());
  for (const ClientDataset& c : clients) out.push_back(&c);
  std::stable_sort(out.begin(), out.end(), [](const ClientDataset* a, const ClientDataset* b) {
    return a->client_id < b->client_id;
  });
  return out;
}

}  // namespace pfcm

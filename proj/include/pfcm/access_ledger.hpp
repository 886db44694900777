#pragma once

#include <cstdint>
#include <span>
#include <unordered_set>

namespace pfcm {

// Which part of the pipeline is currently consuming sample data. The ledger
// exists to prove that test samples never reach a training phase.
enum class DataPhase {
  kNone = 0,
  kFedAvg,
  kClusterDeltas,
  kClusterTrain,
  kRegistration,
  kEvaluation,
};

inline constexpr std::size_t kDataPhaseCount = 6;

class AccessLedger {
 public:
  static AccessLedger& instance();

  void reset();
  void record(DataPhase phase, std::uint64_t sample_id);
  const std::unordered_set<std::uint64_t>& accessed(DataPhase phase) const;

 private:
  AccessLedger() = default;
  std::unordered_set<std::uint64_t> sets_[kDataPhaseCount];
};

// RAII scope for the active phase; nested scopes restore the previous one.
class DataPhaseScope {
 public:
  explicit DataPhaseScope(DataPhase phase);
  ~DataPhaseScope();
  DataPhaseScope(const DataPhaseScope&) = delete;
  DataPhaseScope& operator=(const DataPhaseScope&) = delete;

  static DataPhase current();

 private:
  DataPhase previous_;
};

}  // namespace pfcm

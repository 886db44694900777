#include "pfcm/access_ledger.hpp"

namespace pfcm {

namespace {
DataPhase g_current_phase = DataPhase::kNone;
}

AccessLedger& AccessLedger::instance() {
  static AccessLedger ledger;
  return ledger;
}

void AccessLedger::reset() {
  for (auto& set : sets_) set.clear();
}

void AccessLedger::record(DataPhase phase, std::uint64_t sample_id) {
  sets_[static_cast<std::size_t>(phase)].insert(sample_id);
}

const std::unordered_set<std::uint64_t>& AccessLedger::accessed(DataPhase phase) const {
  return sets_[static_cast<std::size_t>(phase)];
}

DataPhaseScope::DataPhaseScope(DataPhase phase) : previous_(g_current_phase) {
  g_current_phase = phase;
}

DataPhaseScope::~DataPhaseScope() { g_current_phase = previous_; }

DataPhase DataPhaseScope::current() { return g_current_phase; }

}  // namespace pfcm

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfcm/dataset.hpp"

namespace pfcm {

// Data CSV schema: header `subject_id,visit,f00..f79,hamd`, one row per visit.
std::vector<RawRecord> load_records_csv(const std::filesystem::path& path);
void save_records_csv(std::span<const RawRecord> records, const std::filesystem::path& path);

// Ground-truth sidecar (`client_id,group`), evaluation only.
void save_groups_csv(std::span<const std::pair<std::string, int>> groups,
                     const std::filesystem::path& path);
std::vector<std::pair<std::string, int>> load_groups_csv(const std::filesystem::path& path);

}  // namespace pfcm

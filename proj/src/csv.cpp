#include "pfcm/csv.hpp"

#include <cstdio>
#include <fstream>

#include "pfcm/errors.hpp"
#include "pfcm/text.hpp"

namespace pfcm {

namespace {

std::string data_header() {
  std::string h = "subject_id,visit";
  for (int f = 0; f < kFeatureCount; ++f) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), ",f%02d", f);
    h += buf;
  }
  h += ",hamd";
  return h;
}

[[noreturn]] void cell_error(const std::filesystem::path& path, std::size_t row, std::size_t col,
                             const std::string& what) {
  throw DataError(path.string() + ": row " + std::to_string(row) + ", column " +
                  std::to_string(col) + ": " + what);
}

}  // namespace

std::vector<RawRecord> load_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected = data_header();
  if (line != expected) {
    throw DataError(path.string() + ": unexpected header, expected '" + expected + "'");
  }

  constexpr std::size_t kColumns = 2 + kFeatureCount + 1;
  std::vector<RawRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != kColumns) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": expected " +
                      std::to_string(kColumns) + " columns, got " + std::to_string(cells.size()));
    }
    RawRecord r;
    r.subject_id = std::string(trim(cells[0]));
    if (r.subject_id.empty()) cell_error(path, row, 1, "empty subject_id");
    const auto visit = parse_int(cells[1]);
    if (!visit) cell_error(path, row, 2, "non-integer visit");
    r.visit_index = static_cast<int>(*visit);
    for (int f = 0; f < kFeatureCount; ++f) {
      const auto v = parse_double(cells[2 + f]);
      if (!v) cell_error(path, row, 3 + f, "non-numeric feature value");
      r.features[f] = *v;
    }
    const auto hamd = parse_int(cells[kColumns - 1]);
    if (!hamd) cell_error(path, row, kColumns, "non-integer hamd score");
    if (*hamd < 0 || *hamd > kHamdMax) {
      cell_error(path, row, kColumns, "hamd score outside [0,50]");
    }
    r.hamd_score = static_cast<int>(*hamd);
    records.push_back(std::move(r));
  }
  return records;
}

void save_records_csv(std::span<const RawRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << data_header() << "\n";
  for (const RawRecord& r : records) {
    out << r.subject_id << "," << r.visit_index;
    for (int f = 0; f < kFeatureCount; ++f) out << "," << format_double(r.features[f]);
    out << "," << r.hamd_score << "\n";
  }
  if (!out) throw DataError("write failed for " + path.string());
}

void save_groups_csv(std::span<const std::pair<std::string, int>> groups,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "client_id,group\n";
  for (const auto& [client, group] : groups) out << client << "," << group << "\n";
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::pair<std::string, int>> load_groups_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "client_id,group") {
    throw DataError(path.string() + ": unexpected header, expected 'client_id,group'");
  }
  std::vector<std::pair<std::string, int>> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 2) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": expected 2 columns");
    }
    const auto group = parse_int(cells[1]);
    if (!group) cell_error(path, row, 2, "non-integer group");
    out.emplace_back(std::string(trim(cells[0])), static_cast<int>(*group));
  }
  return out;
}

}  // namespace pfcm

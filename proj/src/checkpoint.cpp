#include "pfcm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "pfcm/errors.hpp"
#include "pfcm/text.hpp"

namespace pfcm {

namespace {

void put_le_double(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_le_double(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  if (!in) throw DataError("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string shape_token(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<std::size_t> parse_shape_token(std::string_view token) {
  std::vector<std::size_t> shape;
  for (std::string_view part : split(token, 'x')) {
    const auto v = parse_int(part);
    if (!v || *v <= 0) throw DataError("checkpoint: bad shape token '" + std::string(token) + "'");
    shape.push_back(static_cast<std::size_t>(*v));
  }
  return shape;
}

}  // namespace

void save_checkpoint(const FlatWeights& w, const std::filesystem::path& path) {
  if (!w.layout()) throw ShapeError("save_checkpoint: weights have no layout");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path.string());

  out << "pfcm-checkpoint v1 total=" << w.size() << " layout=";
  const auto slots = w.layout()->slots();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (i) out << ",";
    out << slots[i].name << ":" << shape_token(slots[i].shape) << ":" << slots[i].offset;
  }
  out << "\n";
  for (double v : w.values()) put_le_double(out, v);
  if (!out) throw DataError("save_checkpoint: write failed for " + path.string());
}

FlatWeights load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path.string());

  std::string header;
  if (!std::getline(in, header)) throw DataError("load_checkpoint: missing header");

  const auto fields = split(header, ' ');
  if (fields.size() != 4 || fields[0] != "pfcm-checkpoint" || fields[1] != "v1") {
    throw DataError("load_checkpoint: unrecognized header in " + path.string());
  }
  if (!fields[2].starts_with("total=") || !fields[3].starts_with("layout=")) {
    throw DataError("load_checkpoint: malformed header in " + path.string());
  }
  const auto total = parse_int(fields[2].substr(6));
  if (!total || *total <= 0) throw DataError("load_checkpoint: bad total");

  std::vector<LayerSlot> slots;
  for (std::string_view entry : split(fields[3].substr(7), ',')) {
    const auto parts = split(entry, ':');
    if (parts.size() != 3) throw DataError("load_checkpoint: bad layout entry '" + std::string(entry) + "'");
    const auto offset = parse_int(parts[2]);
    if (!offset || *offset < 0) throw DataError("load_checkpoint: bad offset in '" + std::string(entry) + "'");
    slots.push_back(LayerSlot{std::string(parts[0]), parse_shape_token(parts[1]),
                              static_cast<std::size_t>(*offset)});
  }
  auto layout = std::make_shared<WeightLayout>(std::move(slots));
  if (layout->total() != static_cast<std::size_t>(*total)) {
    throw DataError("load_checkpoint: layout covers " + std::to_string(layout->total()) +
                    " values but header claims " + std::to_string(*total));
  }

  std::vector<double> values(static_cast<std::size_t>(*total));
  for (double& v : values) v = get_le_double(in);
  return FlatWeights(std::move(layout), std::move(values));
}

}  // namespace pfcm

#include "mactas/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mactas/errors.hpp"

namespace mactas {
namespace {

constexpr char kMagic[8] = {'M', 'A', 'C', 'T', 'A', 'S', 'C', 'K'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t header_size() { return 8 + 8 + 8; }

}  // namespace

void write_checkpoint(const std::filesystem::path& binary, const std::vector<CheckpointRecord>& records) {
  std::ofstream os(binary, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + binary.string() + " for writing");
  os.write(kMagic, 8);
  put_u64(os, kCheckpointVersion);
  put_u64(os, records.size());
  for (const auto& r : records) {
    put_u64(os, r.name.size());
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u64(os, r.tensor.rows());
    put_u64(os, r.tensor.cols());
    for (double v : r.tensor.values()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + binary.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& binary) {
  std::ifstream is(binary, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + binary.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + binary.string());
  if (const auto version = get_u64(is); version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get_u64(is);
  std::vector<CheckpointRecord> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get_u64(is);
    if (len > (1u << 20)) throw std::runtime_error("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("checkpoint: truncated file");
    const auto rows = get_u64(is);
    const auto cols = get_u64(is);
    std::vector<double> values(rows * cols);
    for (auto& v : values) v = std::bit_cast<double>(get_u64(is));
    out.push_back({std::move(name), Matrix(rows, cols, std::move(values))});
  }
  return out;
}

nlohmann::json checkpoint_manifest(const std::filesystem::path& binary, const std::vector<CheckpointRecord>& records,
                                   const nlohmann::json& meta) {
  nlohmann::json j;
  j["format"] = "mactas-checkpoint";
  j["version"] = kCheckpointVersion;
  j["binary"] = binary.filename().string();
  j["byte_order"] = "little";
  j["meta"] = meta;
  auto& recs = j["records"] = nlohmann::json::array();
  std::uint64_t offset = header_size();
  for (const auto& r : records) {
    offset += 8 + r.name.size() + 16;
    recs.push_back({{"name", r.name}, {"rows", r.tensor.rows()}, {"cols", r.tensor.cols()}, {"offset", offset}});
    offset += 8 * r.tensor.size();
  }
  return j;
}

void save_checkpoint(const std::filesystem::path& stem, const std::vector<CheckpointRecord>& records,
                     const nlohmann::json& meta) {
  auto bin = stem;
  bin += ".bin";
  auto man = stem;
  man += ".json";
  write_checkpoint(bin, records);
  std::ofstream os(man, std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write manifest " + man.string());
  os << checkpoint_manifest(bin, records, meta).dump(2) << '\n';
}

}  // namespace mactas

#include "tmr/container.hpp"

#include <cstring>
#include <fstream>

#include "tmr/errors.hpp"

namespace tmr {

namespace {

constexpr char kMagic[8] = {'T', 'M', 'R', 'C', 'O', 'N', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kTypeSequence = 0;
constexpr std::uint32_t kTypeBank = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError(std::string("container: truncated file while reading ") + what);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("container: cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("container: cannot open: " + path.string());
  return is;
}

std::uint32_t read_header(std::istream& is, std::uint64_t& rows, std::uint64_t& width,
                          std::uint32_t& num_phases, std::uint64_t& seed) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("container: bad magic, not a container file");
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw DataError("container: unsupported version " + std::to_string(version));
  const auto type = read_pod<std::uint32_t>(is, "type");
  rows = read_pod<std::uint64_t>(is, "rows");
  width = read_pod<std::uint64_t>(is, "width");
  num_phases = read_pod<std::uint32_t>(is, "num_phases");
  seed = read_pod<std::uint64_t>(is, "seed");
  return type;
}

void write_header(std::ostream& os, std::uint32_t type, std::uint64_t rows,
                  std::uint64_t width, std::uint32_t num_phases, std::uint64_t seed) {
  os.write(kMagic, 8);
  write_pod(os, kVersion);
  write_pod(os, type);
  write_pod(os, rows);
  write_pod(os, width);
  write_pod(os, num_phases);
  write_pod(os, seed);
}

}  // namespace

void save_sequence(const std::filesystem::path& path, const LabeledSequence& seq) {
  auto os = open_out(path);
  write_header(os, kTypeSequence, seq.T, seq.d_raw,
               static_cast<std::uint32_t>(seq.num_phases), seq.seed);
  os.write(reinterpret_cast<const char*>(seq.features.data()),
           static_cast<std::streamsize>(seq.features.size() * sizeof(double)));
  for (int l : seq.labels) write_pod(os, static_cast<std::int32_t>(l));
  if (!os) throw DataError("container: write failed: " + path.string());
}

LabeledSequence load_sequence(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::uint64_t rows = 0, width = 0, seed = 0;
  std::uint32_t num_phases = 0;
  const auto type = read_header(is, rows, width, num_phases, seed);
  if (type != kTypeSequence)
    throw DataError("container: expected a labeled sequence, found type " + std::to_string(type));
  LabeledSequence seq;
  seq.T = rows;
  seq.d_raw = width;
  seq.num_phases = static_cast<int>(num_phases);
  seq.seed = seed;
  seq.features.resize(rows * width);
  is.read(reinterpret_cast<char*>(seq.features.data()),
          static_cast<std::streamsize>(seq.features.size() * sizeof(double)));
  if (!is) throw DataError("container: truncated features: " + path.string());
  seq.labels.resize(rows);
  for (std::uint64_t t = 0; t < rows; ++t) {
    const auto l = read_pod<std::int32_t>(is, "labels");
    if (l < 0 || l >= static_cast<std::int32_t>(num_phases))
      throw DataError("container: label out of range: " + path.string());
    seq.labels[t] = l;
  }
  seq.boundaries = label_runs(seq.labels);
  return seq;
}

void save_bank(const std::filesystem::path& path, const MemoryBank& bank) {
  auto os = open_out(path);
  write_header(os, kTypeBank, bank.size(), bank.width(), 0, 0);
  os.write(reinterpret_cast<const char*>(bank.raw().data()),
           static_cast<std::streamsize>(bank.raw().size() * sizeof(double)));
  if (!os) throw DataError("container: write failed: " + path.string());
}

MemoryBank load_bank(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::uint64_t rows = 0, width = 0, seed = 0;
  std::uint32_t num_phases = 0;
  const auto type = read_header(is, rows, width, num_phases, seed);
  if (type != kTypeBank)
    throw DataError("container: expected a feature bank, found type " + std::to_string(type));
  MemoryBank bank(width);
  std::vector<double> row(width);
  for (std::uint64_t t = 0; t < rows; ++t) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(width * sizeof(double)));
    if (!is) throw DataError("container: truncated bank: " + path.string());
    bank.append(row);
  }
  bank.freeze();
  return bank;
}

}  // namespace tmr

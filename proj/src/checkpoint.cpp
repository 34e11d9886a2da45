#include "tmr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tmr/errors.hpp"

namespace tmr {

namespace {

constexpr char kMagic[8] = {'T', 'M', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, const char* what) {
  const auto n = read_pod<std::uint32_t>(is, what);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError(std::string("checkpoint: truncated while reading ") + what);
  return s;
}

void write_doubles(std::ostream& os, std::span<const double> v) {
  write_pod(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& is, const char* what) {
  const auto n = read_pod<std::uint64_t>(is, what);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw DataError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

void write_model_cfg(std::ostream& os, const ModelConfig& c) {
  write_pod(os, static_cast<std::uint64_t>(c.d_raw));
  write_pod(os, static_cast<std::uint64_t>(c.d));
  write_pod(os, static_cast<std::uint64_t>(c.d_e));
  write_pod(os, static_cast<std::uint64_t>(c.d_h));
  write_pod(os, static_cast<std::int32_t>(c.num_phases));
  write_pod(os, static_cast<std::uint64_t>(c.clip_len));
  write_pod(os, static_cast<std::uint64_t>(c.bank_len));
  write_pod(os, static_cast<std::uint32_t>(c.mode));
  write_pod(os, static_cast<std::uint32_t>(c.incorporation));
  write_pod(os, static_cast<std::uint32_t>(c.kernel_sizes.size()));
  for (std::size_t k : c.kernel_sizes) write_pod(os, static_cast<std::uint64_t>(k));
  write_pod(os, static_cast<std::uint32_t>(c.fusion));
  write_pod(os, c.dropout_rate);
}

ModelConfig read_model_cfg(std::istream& is) {
  ModelConfig c;
  c.d_raw = read_pod<std::uint64_t>(is, "d_raw");
  c.d = read_pod<std::uint64_t>(is, "d");
  c.d_e = read_pod<std::uint64_t>(is, "d_e");
  c.d_h = read_pod<std::uint64_t>(is, "d_h");
  c.num_phases = read_pod<std::int32_t>(is, "num_phases");
  c.clip_len = read_pod<std::uint64_t>(is, "clip_len");
  c.bank_len = read_pod<std::uint64_t>(is, "bank_len");
  c.mode = static_cast<AblationMode>(read_pod<std::uint32_t>(is, "mode"));
  c.incorporation = static_cast<Incorporation>(read_pod<std::uint32_t>(is, "incorporation"));
  const auto nk = read_pod<std::uint32_t>(is, "kernel_count");
  c.kernel_sizes.clear();
  for (std::uint32_t i = 0; i < nk; ++i)
    c.kernel_sizes.push_back(read_pod<std::uint64_t>(is, "kernel_size"));
  c.fusion = static_cast<FusionMode>(read_pod<std::uint32_t>(is, "fusion"));
  c.dropout_rate = read_pod<double>(is, "dropout_rate");
  c.validate();
  return c;
}

}  // namespace

ModelParams clone_params(const ModelConfig& cfg, const ModelParams& params) {
  // Rebuild the structure, then overwrite every tensor with a fresh copy.
  Rng scratch(0);
  ModelParams copy = init_model(cfg, scratch);
  ParamGroups src = collect_params(cfg, params);
  ParamGroups dst = collect_params(cfg, copy);
  if (src.size() != dst.size()) throw StateError("clone_params: group structure mismatch");
  for (std::size_t g = 0; g < src.size(); ++g) {
    if (src[g].params.size() != dst[g].params.size())
      throw StateError("clone_params: parameter list mismatch in group " + src[g].name);
    for (std::size_t i = 0; i < src[g].params.size(); ++i) {
      const auto& from = src[g].params[i].tensor;
      auto& to = dst[g].params[i].tensor;
      if (from.shape() != to.shape())
        throw StateError("clone_params: shape mismatch for " + src[g].params[i].name);
      std::copy(from.values().begin(), from.values().end(), to.mutable_values().begin());
    }
  }
  return copy;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path.string());
  os.write(kMagic, 8);
  write_pod(os, kVersion);
  write_pod(os, ckpt.stage);
  write_pod(os, ckpt.iteration);
  write_pod(os, ckpt.master_seed);
  write_model_cfg(os, ckpt.model_cfg);
  write_pod(os, ckpt.sched.best);
  write_pod(os, ckpt.sched.stagnation);
  write_pod(os, ckpt.sched.lr_scale);
  write_pod(os, static_cast<std::uint8_t>(ckpt.sched.has_best));
  write_string(os, ckpt.rng_state);

  ParamGroups groups = collect_params(ckpt.model_cfg, ckpt.params);
  std::size_t total_params = 0;
  for (const auto& g : groups) total_params += g.params.size();
  if (!ckpt.velocity.empty() && ckpt.velocity.size() != total_params)
    throw StateError("checkpoint: velocity buffers misaligned with parameters");

  write_pod(os, static_cast<std::uint32_t>(groups.size()));
  std::size_t flat = 0;
  for (const auto& g : groups) {
    write_string(os, g.name);
    write_pod(os, static_cast<std::uint32_t>(g.params.size()));
    for (const auto& p : g.params) {
      write_string(os, p.name);
      write_pod(os, static_cast<std::uint32_t>(p.tensor.shape().size()));
      for (std::size_t d : p.tensor.shape()) write_pod(os, static_cast<std::uint64_t>(d));
      write_doubles(os, p.tensor.values());
      const bool has_vel = !ckpt.velocity.empty();
      write_pod(os, static_cast<std::uint8_t>(has_vel));
      if (has_vel) write_doubles(os, ckpt.velocity[flat]);
      ++flat;
    }
  }
  if (!os) throw DataError("checkpoint: write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic: " + path.string());
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.stage = read_pod<std::uint32_t>(is, "stage");
  ckpt.iteration = read_pod<std::uint64_t>(is, "iteration");
  ckpt.master_seed = read_pod<std::uint64_t>(is, "master_seed");
  ckpt.model_cfg = read_model_cfg(is);
  ckpt.sched.best = read_pod<double>(is, "sched.best");
  ckpt.sched.stagnation = read_pod<std::uint64_t>(is, "sched.stagnation");
  ckpt.sched.lr_scale = read_pod<double>(is, "sched.lr_scale");
  ckpt.sched.has_best = read_pod<std::uint8_t>(is, "sched.has_best") != 0;
  ckpt.rng_state = read_string(is, "rng_state");

  Rng scratch(0);
  ckpt.params = init_model(ckpt.model_cfg, scratch);
  ParamGroups groups = collect_params(ckpt.model_cfg, ckpt.params);

  const auto group_count = read_pod<std::uint32_t>(is, "group_count");
  if (group_count != groups.size())
    throw DataError("checkpoint: group count mismatch (file has " +
                    std::to_string(group_count) + ")");
  bool any_velocity = false;
  for (auto& g : groups) {
    const std::string gname = read_string(is, "group_name");
    if (gname != g.name)
      throw DataError("checkpoint: unexpected group '" + gname + "', wanted '" + g.name + "'");
    const auto pcount = read_pod<std::uint32_t>(is, "param_count");
    if (pcount != g.params.size())
      throw DataError("checkpoint: parameter count mismatch in group " + g.name);
    for (auto& p : g.params) {
      const std::string pname = read_string(is, "param_name");
      if (pname != p.name)
        throw DataError("checkpoint: unexpected parameter '" + pname + "'");
      const auto rank = read_pod<std::uint32_t>(is, "rank");
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i)
        shape.push_back(read_pod<std::uint64_t>(is, "dim"));
      if (shape != p.tensor.shape())
        throw DataError("checkpoint: shape mismatch for " + g.name + "." + p.name);
      auto data = read_doubles(is, "values");
      if (data.size() != p.tensor.size())
        throw DataError("checkpoint: value size mismatch for " + g.name + "." + p.name);
      std::copy(data.begin(), data.end(), p.tensor.mutable_values().begin());
      const bool has_vel = read_pod<std::uint8_t>(is, "has_velocity") != 0;
      if (has_vel) {
        ckpt.velocity.push_back(read_doubles(is, "velocity"));
        any_velocity = true;
      } else {
        ckpt.velocity.emplace_back();
      }
    }
  }
  if (!any_velocity) ckpt.velocity.clear();
  return ckpt;
}

}  // namespace tmr

#include "m2d/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace m2d {

Tensor& ParamRegistry::add(const std::string& name, Tensor param) {
  if (contains(name)) throw UsageError("ParamRegistry: duplicate parameter '" + name + "'");
  entries_.emplace_back(name, std::move(param));
  return entries_.back().second;
}

Tensor& ParamRegistry::get(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw UsageError("ParamRegistry: unknown parameter '" + name + "'");
}

const Tensor& ParamRegistry::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw UsageError("ParamRegistry: unknown parameter '" + name + "'");
}

bool ParamRegistry::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// little-endian primitives

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw ParseError(std::string("checkpoint: truncated reading ") + what);
  }
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw ParseError(std::string("checkpoint: truncated reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is, const char* what) {
  const std::uint64_t bits = get_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

struct StoredParam {
  std::string name;
  Shape shape;
};

StoredParam read_header_entry(std::istream& is) {
  StoredParam p;
  const std::uint32_t name_len = get_u32(is, "name length");
  p.name.resize(name_len);
  if (name_len > 0 && !is.read(p.name.data(), name_len)) {
    throw ParseError("checkpoint: truncated reading parameter name");
  }
  const std::uint32_t rank = get_u32(is, "rank");
  p.shape.resize(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    p.shape[i] = static_cast<std::int64_t>(get_u64(is, "dimension"));
  }
  return p;
}

void open_and_check_magic(std::ifstream& is, const std::string& path) {
  is.open(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "M2DT", 4) != 0) {
    throw ParseError("checkpoint: bad magic bytes at offset 0 in '" + path + "'");
  }
  const std::uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version) +
                     " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
}

}  // namespace

void save_checkpoint(const ParamRegistry& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError("checkpoint: cannot open '" + path + "' for writing");
  os.write("M2DT", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
    for (double v : t.data()) put_f64(os, v);
  }
  if (!os) throw ParseError("checkpoint: write failed for '" + path + "'");
}

void load_checkpoint(ParamRegistry& params, const std::string& path) {
  std::ifstream is;
  open_and_check_magic(is, path);
  const std::uint32_t count = get_u32(is, "parameter count");
  if (count != params.size()) {
    throw ConfigError("checkpoint: '" + path + "' stores " + std::to_string(count) +
                      " parameters but the model expects " + std::to_string(params.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const StoredParam p = read_header_entry(is);
    if (!params.contains(p.name)) {
      throw ConfigError("checkpoint: stored parameter '" + p.name +
                        "' is unknown to this model configuration");
    }
    Tensor& t = params.get(p.name);
    if (t.shape() != p.shape) {
      throw ConfigError("checkpoint: parameter '" + p.name + "' has shape " +
                        shape_to_string(p.shape) + " but the configuration expects " +
                        shape_to_string(t.shape()));
    }
    std::vector<double> data(static_cast<std::size_t>(shape_numel(p.shape)));
    for (auto& v : data) v = get_f64(is, "parameter data");
    t.update_data(data);
  }
}

std::vector<std::pair<std::string, Shape>> read_checkpoint_index(const std::string& path) {
  std::ifstream is;
  open_and_check_magic(is, path);
  const std::uint32_t count = get_u32(is, "parameter count");
  std::vector<std::pair<std::string, Shape>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredParam p = read_header_entry(is);
    const std::int64_t n = shape_numel(p.shape);
    is.seekg(n * 8, std::ios::cur);
    if (!is) throw ParseError("checkpoint: truncated parameter data for '" + p.name + "'");
    out.emplace_back(std::move(p.name), std::move(p.shape));
  }
  return out;
}

}  // namespace m2d

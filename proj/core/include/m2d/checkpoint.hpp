#pragma once

#include <string>
#include <utility>
#include <vector>

#include "m2d/tensor.hpp"

namespace m2d {

// Ordered collection of named learnable tensors. Insertion order is the
// serialization order, so identical registration sequences produce
// byte-identical checkpoints.
class ParamRegistry {
 public:
  Tensor& add(const std::string& name, Tensor param);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Checkpoint file: magic "M2DT", format version u32, parameter count u32,
// then per parameter: name length u32 + UTF-8 name, rank u32, dims u64 each,
// f64 little-endian data. Round-trips bit-exactly.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamRegistry& params, const std::string& path);

// Loads into an existing registry; every stored parameter must match a
// registered name and shape exactly.
void load_checkpoint(ParamRegistry& params, const std::string& path);

// Reads names and shapes only (for inspection/compatibility messages).
std::vector<std::pair<std::string, Shape>> read_checkpoint_index(const std::string& path);

}  // namespace m2d

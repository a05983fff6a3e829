#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2d/errors.hpp"

namespace m2d {

// All hyperparameters. Defaults follow the reference setup (512-dim features,
// 8-layer kernel-5 convolution, caption hidden 1024, scales 64-24-4);
// desk() is a reduced profile that trains in minutes on a CPU.
struct Config {
  // feature dimensions
  std::int64_t feature_dim = 4096;  // raw clip feature width of the corpus
  std::int64_t d_v = 512;           // projected video feature width
  std::int64_t d_t = 512;           // text feature width (must be even)
  std::int64_t d_e = 300;           // word embedding width
  // map construction
  std::vector<std::int64_t> scales = {64, 24, 4};
  std::int64_t frames_per_clip = 4;
  double fps = 4.0;
  // fusion / scoring network
  std::int64_t conv_layers = 8;
  std::int64_t conv_kernel = 5;
  // caption module
  std::int64_t caption_hidden = 1024;
  // weak supervision
  std::int64_t top_k = 10;
  double l_min = 0.1;
  double l_max = 0.7;
  double lambda = 1.0;
  // optimization
  double lr = 1e-4;
  std::int64_t batch = 128;
  std::int64_t steps = 2000;
  std::int64_t checkpoint_every = 500;
  // inference
  double nms_threshold = 0.5;
  // runtime
  std::uint64_t seed = 0;
  std::int64_t threads = 0;  // 0 = hardware concurrency

  // Reduced profile used by the synthetic-corpus workflow.
  static Config desk();

  // Throws ConfigError when any value is outside its documented range.
  void validate() const;

  // key = value text form; parsing rejects unknown keys.
  static Config parse(const std::string& text);
  static Config load(const std::string& path);
  std::string to_string() const;
  void save(const std::string& path) const;

  // Applies one "key=value" assignment (CLI overrides reuse the parser).
  void set(const std::string& key, const std::string& value);
};

}  // namespace m2d

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "m2d/checkpoint.hpp"

using namespace m2d;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const char* name) {
  return (fs::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

ParamRegistry sample_registry() {
  ParamRegistry reg;
  Rng rng(99);
  reg.add("a.w", Tensor::fan_in_init({3, 4}, 4, rng));
  reg.add("a.b", Tensor::fan_in_init({3}, 4, rng));
  reg.add("deep.nested.k", Tensor::fan_in_init({2, 2, 3, 3}, 18, rng));
  return reg;
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
  const std::string path = temp_path("m2d_ckpt_test.m2dt");
  ParamRegistry reg = sample_registry();
  save_checkpoint(reg, path);

  ParamRegistry loaded = sample_registry();
  // scrub the values so the load is observable
  for (auto& [name, t] : loaded.entries()) {
    t.update_data(std::vector<double>(t.data().size(), 0.0));
  }
  load_checkpoint(loaded, path);
  for (std::size_t i = 0; i < reg.size(); ++i) {
    CHECK(loaded.entries()[i].second.data() == reg.entries()[i].second.data());
  }

  // saving the loaded registry reproduces the file byte for byte
  const std::string path2 = temp_path("m2d_ckpt_test2.m2dt");
  save_checkpoint(loaded, path2);
  CHECK(slurp(path) == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoint magic and version are checked") {
  const std::string path = temp_path("m2d_ckpt_bad.m2dt");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE" << std::string(16, '\0');
  }
  ParamRegistry reg = sample_registry();
  CHECK_THROWS_WITH_AS(load_checkpoint(reg, path), doctest::Contains("magic"), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint shape mismatch names the parameter") {
  const std::string path = temp_path("m2d_ckpt_shape.m2dt");
  ParamRegistry reg = sample_registry();
  save_checkpoint(reg, path);

  ParamRegistry other;
  Rng rng(1);
  other.add("a.w", Tensor::fan_in_init({3, 5}, 5, rng));  // wrong shape
  other.add("a.b", Tensor::fan_in_init({3}, 4, rng));
  other.add("deep.nested.k", Tensor::fan_in_init({2, 2, 3, 3}, 18, rng));
  CHECK_THROWS_WITH_AS(load_checkpoint(other, path), doctest::Contains("a.w"), ConfigError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint truncation is reported") {
  const std::string path = temp_path("m2d_ckpt_trunc.m2dt");
  ParamRegistry reg = sample_registry();
  save_checkpoint(reg, path);
  const std::string bytes = slurp(path);
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  ParamRegistry loaded = sample_registry();
  CHECK_THROWS_AS(load_checkpoint(loaded, path), ParseError);
  std::remove(path.c_str());
}

#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "../common/oracles.hpp"
#include "probsal/ops.hpp"

namespace probsal::testing {

inline Tensor random_tensor(Shape s, std::mt19937_64& g, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.vec()) v = u(g);
  return t;
}

inline Tensor binary_map(int h, int w, std::mt19937_64& g, double p = 0.5) {
  std::bernoulli_distribution b(p);
  Tensor t = Tensor::map(h, w);
  for (auto& v : t.vec()) v = b(g) ? 1.0 : 0.0;
  return t;
}

// Scalarizes an op's output with a fixed random projection so every output
// element contributes to the checked gradient.
inline LossFn projected(std::function<ag::Var(const std::vector<ag::Var>&)> op, Shape out, std::uint64_t seed = 99) {
  std::mt19937_64 g(seed);
  const Tensor r = random_tensor(out, g);
  return [op, r](const std::vector<ag::Var>& v) { return ag::sum(ag::mul(op(v), ag::constant(r))); };
}

// Fresh scratch directory under $PROBSAL_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* base = std::getenv("PROBSAL_TEST_TMP");
  const std::filesystem::path root = base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "probsal_unit";
  const auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace probsal::testing

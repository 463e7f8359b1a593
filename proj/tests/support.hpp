#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "pcg/pcg.hpp"

namespace pcg::test {

/// 0.3 * f1(x0) g1(x1) + 0.7 * f2(x0) g2(x1) over two binary variables.
inline Circuit two_component_mixture() {
  CircuitBuilder b(2, 2);
  NodeId f1 = b.add_input(0, {0.2, 0.8});
  NodeId g1 = b.add_input(1, {0.6, 0.4});
  NodeId f2 = b.add_input(0, {0.9, 0.1});
  NodeId g2 = b.add_input(1, {0.5, 0.5});
  NodeId p1 = b.add_product({f1, g1});
  NodeId p2 = b.add_product({f2, g2});
  b.set_root(b.add_sum({p1, p2}, {0.3, 0.7}));
  return certify(b.build());
}

/// Fully factorized circuit with uniform inputs.
inline Circuit uniform_factorized(std::size_t vars, std::size_t cats) {
  CircuitBuilder b(vars, cats);
  std::vector<NodeId> leaves;
  for (std::size_t v = 0; v < vars; ++v)
    leaves.push_back(b.add_input(static_cast<VarId>(v), std::vector<double>(cats, 1.0 / static_cast<double>(cats))));
  NodeId prod = b.add_product(leaves);
  b.set_root(b.add_sum({prod}, {1.0}));
  return certify(b.build());
}

inline Circuit small_random(std::size_t vars, std::size_t cats, std::uint64_t seed) {
  RandomCircuitConfig cfg;
  cfg.num_variables = vars;
  cfg.num_categories = cats;
  cfg.sums_per_region = 3;
  cfg.leaves_per_variable = 3;
  cfg.max_parts = 3;
  return random_circuit(cfg, seed);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("pcg-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace pcg::test

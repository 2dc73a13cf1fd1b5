#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spsl/grounder.hpp"

namespace spsl::infer {

using ground::PotentialSet;

/// Soft truth values of the free atoms, one per variable, each in [0,1].
struct Interpretation {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const Interpretation&, const Interpretation&) = default;
};

struct SolverConfig {
  std::size_t max_iters = 20000;
  double tol = 1e-7;       // best-objective improvement that counts as progress
  double step0 = 1.0;      // step size at t is step0 / sqrt(t)
  std::uint64_t seed = 0;
  bool random_init = false;  // false: start every variable at the box center
  std::size_t patience = 1000;

  void validate() const;
};

struct SolveReport {
  std::size_t iterations = 0;
  double objective = 0.0;
  std::vector<double> trace;  // best-so-far objective, one entry per iteration
  bool converged = false;
};

struct MapResult {
  Interpretation interpretation;
  SolveReport report;
};

/// Sum of weighted distances to satisfaction. Throws std::invalid_argument on a
/// dimension mismatch.
double energy(const PotentialSet& potentials, std::span<const double> y);
inline double energy(const PotentialSet& potentials, const Interpretation& y) {
  return energy(potentials, std::span<const double>(y.values));
}

/// Projected subgradient descent over the feasible box with best-iterate
/// tracking. Non-convergence is reported, never thrown.
MapResult solve_map(const PotentialSet& potentials, const SolverConfig& config = {});

struct GridResult {
  Interpretation interpretation;
  double objective = 0.0;
};

/// Exhaustive search over {0, res, 2res, ..., 1}^n (n <= 4), first minimum in
/// row-major order. Test oracle for solve_map.
GridResult brute_force_map(const PotentialSet& potentials, double resolution);

}  // namespace spsl::infer

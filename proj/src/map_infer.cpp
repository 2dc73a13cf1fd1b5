#include "spsl/map_infer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace spsl::infer {

using ground::GroundPotential;
using ground::Operand;

void SolverConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("solver max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("solver tol must be > 0");
  if (!(step0 > 0.0)) throw std::invalid_argument("solver step0 must be > 0");
  if (patience < 1) throw std::invalid_argument("solver patience must be >= 1");
}

double energy(const PotentialSet& potentials, std::span<const double> y) {
  if (y.size() != potentials.n_free())
    throw std::invalid_argument("interpretation has " + std::to_string(y.size()) +
                                " values, expected " + std::to_string(potentials.n_free()));
  double total = 0.0;
  for (const auto& p : potentials.potentials())
    total += p.weight * ground::distance_to_satisfaction(p, y);
  return total;
}

namespace {

// A potential rewritten as w * max(0, c + sum_k a_k y_k) with merged terms.
struct LinearHinge {
  double weight;
  double constant;
  std::vector<std::pair<std::size_t, double>> terms;

  double value(const std::vector<double>& y) const {
    double s = constant;
    for (const auto& [i, a] : terms) s += a * y[i];
    return s;
  }
};

std::vector<LinearHinge> linearize(const PotentialSet& set) {
  std::vector<LinearHinge> out;
  out.reserve(set.potentials().size());
  for (const GroundPotential& p : set.potentials()) {
    LinearHinge h{p.weight, 1.0, {}};
    auto add = [&](std::size_t index, double a) {
      for (auto& term : h.terms) {
        if (term.first == index) {
          term.second += a;
          return;
        }
      }
      h.terms.emplace_back(index, a);
    };
    for (const Operand& op : p.pos) {
      if (op.is_free()) {
        add(op.index, -1.0);
      } else {
        h.constant -= op.value;
      }
    }
    for (const Operand& op : p.neg) {
      h.constant -= 1.0;
      if (op.is_free()) {
        add(op.index, 1.0);
      } else {
        h.constant += op.value;
      }
    }
    std::erase_if(h.terms, [](const auto& t) { return t.second == 0.0; });
    out.push_back(std::move(h));
  }
  return out;
}

double objective(const std::vector<LinearHinge>& hinges, const std::vector<double>& y) {
  double total = 0.0;
  for (const auto& h : hinges) total += h.weight * std::max(0.0, h.value(y));
  return total;
}

// Projects y onto the affine set where its k nearest kinks (hinge zeros and
// box faces) are all active, for growing k, and keeps any clamped point that
// lowers the objective. Subgradient iterates only approach a kink at the rate
// of the step size; the optimum of a piecewise-linear energy sits on one.
double polish(const std::vector<LinearHinge>& hinges, const std::vector<double>& lo, const std::vector<double>& hi,
              std::vector<double>& best, double best_obj) {
  const std::size_t n = best.size();
  constexpr std::size_t kMaxActive = 32;
  constexpr double kMaxDistance = 0.05;
  struct Face {
    double distance;
    Eigen::VectorXd normal;
    double rhs;  // normal . y == rhs
  };
  for (int round = 0; round < 3; ++round) {
    std::vector<Face> faces;
    for (const auto& h : hinges) {
      if (h.terms.empty()) continue;
      Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      for (const auto& [i, c] : h.terms) a[static_cast<Eigen::Index>(i)] = c;
      const double d = std::abs(h.value(best)) / a.norm();
      if (d < kMaxDistance) faces.push_back({d, std::move(a), -h.constant});
    }
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i));
      if (best[i] - lo[i] < kMaxDistance) faces.push_back({best[i] - lo[i], e, lo[i]});
      if (hi[i] - best[i] < kMaxDistance) faces.push_back({hi[i] - best[i], e, hi[i]});
    }
    std::stable_sort(faces.begin(), faces.end(), [](const Face& a, const Face& b) { return a.distance < b.distance; });

    bool improved = false;
    const Eigen::Map<const Eigen::VectorXd> y(best.data(), static_cast<Eigen::Index>(n));
    const std::size_t kmax = std::min({faces.size(), n, kMaxActive});
    std::vector<double> candidate(n), winner;
    for (std::size_t k = 1; k <= kmax; ++k) {
      Eigen::MatrixXd A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
      Eigen::VectorXd r(static_cast<Eigen::Index>(k));
      for (std::size_t j = 0; j < k; ++j) {
        A.row(static_cast<Eigen::Index>(j)) = faces[j].normal.transpose();
        r[static_cast<Eigen::Index>(j)] = faces[j].rhs - faces[j].normal.dot(y);
      }
      const Eigen::VectorXd step = A.completeOrthogonalDecomposition().solve(r);
      for (std::size_t i = 0; i < n; ++i)
        candidate[i] = std::clamp(best[i] + step[static_cast<Eigen::Index>(i)], lo[i], hi[i]);
      const double obj = objective(hinges, candidate);
      if (obj < best_obj) {
        best_obj = obj;
        winner = candidate;
        improved = true;
      }
    }
    if (!improved) break;
    best = std::move(winner);
  }
  return best_obj;
}

}  // namespace

MapResult solve_map(const PotentialSet& potentials, const SolverConfig& config) {
  config.validate();
  const std::size_t n = potentials.n_free();
  const auto& lo = potentials.lower_bounds();
  const auto& hi = potentials.upper_bounds();
  const auto hinges = linearize(potentials);

  std::vector<double> y(n);
  if (config.random_init) {
    std::mt19937_64 rng(config.seed);
    for (std::size_t i = 0; i < n; ++i) {
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      y[i] = lo[i] + u * (hi[i] - lo[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::clamp(0.5, lo[i], hi[i]);
  }

  MapResult result;
  SolveReport& report = result.report;
  std::vector<double> best = y;
  double best_obj = objective(hinges, y);
  double window_start = best_obj;
  std::size_t window_begin = 0;

  if (n == 0 || best_obj == 0.0) {
    report.converged = true;
  }

  std::vector<double> grad(n);
  std::size_t t = 1;
  for (; !report.converged && t <= config.max_iters; ++t) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& h : hinges) {
      if (h.value(y) <= 0.0) continue;
      for (const auto& [i, a] : h.terms) grad[i] += h.weight * a;
    }
    const double step = config.step0 / std::sqrt(static_cast<double>(t));
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      double next = std::clamp(y[i] - step * grad[i], lo[i], hi[i]);
      moved = moved || next != y[i];
      y[i] = next;
    }
    double obj = objective(hinges, y);
    if (obj < best_obj) {
      best_obj = obj;
      best = y;
    }
    report.trace.push_back(best_obj);

    // A fixed point of the projected step, or a zero objective, cannot improve.
    if (!moved || best_obj == 0.0) {
      report.converged = true;
      break;
    }
    if (t - window_begin >= config.patience) {
      if (window_start - best_obj < config.tol) {
        report.converged = true;
        break;
      }
      window_start = best_obj;
      window_begin = t;
    }
  }

  if (n > 0 && best_obj > 0.0) {
    const double polished = polish(hinges, lo, hi, best, best_obj);
    if (polished < best_obj) {
      best_obj = polished;
      report.trace.push_back(best_obj);
    }
  }

  report.iterations = report.trace.size();
  report.objective = energy(potentials, best);
  result.interpretation.values = std::move(best);
  return result;
}

GridResult brute_force_map(const PotentialSet& potentials, double resolution) {
  const std::size_t n = potentials.n_free();
  if (n > 4) throw std::invalid_argument("brute_force_map supports at most 4 free variables");
  if (!(resolution > 0.0 && resolution <= 0.5))
    throw std::invalid_argument("brute_force_map resolution must lie in (0, 0.5]");

  std::vector<double> base;
  for (std::size_t k = 0;; ++k) {
    double v = static_cast<double>(k) * resolution;
    if (v > 1.0 + 1e-12) break;
    base.push_back(std::min(v, 1.0));
  }
  if (base.back() < 1.0) base.push_back(1.0);

  std::vector<std::vector<double>> axes(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : base)
      if (v >= potentials.lower(i) - 1e-12 && v <= potentials.upper(i) + 1e-12)
        axes[i].push_back(std::clamp(v, potentials.lower(i), potentials.upper(i)));
    if (axes[i].empty()) axes[i].push_back(potentials.lower(i));
  }

  GridResult result;
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> y(n);
  bool first = true;
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) y[i] = axes[i][idx[i]];
    double e = energy(potentials, y);
    if (first || e < result.objective) {
      result.objective = e;
      result.interpretation.values = y;
      first = false;
    }
    // Odometer with the last variable varying fastest (row-major).
    std::size_t d = n;
    while (d > 0) {
      --d;
      if (++idx[d] < axes[d].size()) break;
      idx[d] = 0;
      if (d == 0) return result;
    }
    if (n == 0) return result;
  }
}

}  // namespace spsl::infer

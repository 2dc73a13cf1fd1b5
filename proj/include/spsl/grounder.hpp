#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spsl/rule_lang.hpp"

namespace spsl::ground {

using rules::AtomKey;

// Lukasiewicz connectives. Inputs outside [0,1] throw std::domain_error.
double soft_and(double a, double b);
double soft_or(double a, double b);
double soft_not(double a);

/// One entry of a clause's positive or negated index set: either a free
/// variable of the interpretation or an observed constant.
struct Operand {
  enum class Kind { free, observed };

  Kind kind = Kind::observed;
  std::size_t index = 0;  // valid when kind == free
  double value = 0.0;     // valid when kind == observed

  static Operand free_var(std::size_t index) { return {Kind::free, index, 0.0}; }
  static Operand observed(double value) { return {Kind::observed, 0, value}; }
  bool is_free() const noexcept { return kind == Kind::free; }
  friend bool operator==(const Operand&, const Operand&) = default;
};

/// Weighted ground clause `OR_{pos} y  OR  OR_{neg} !y`.
struct GroundPotential {
  double weight = 1.0;
  std::vector<Operand> pos;
  std::vector<Operand> neg;
  std::size_t rule = 0;  // index of the originating rule

  friend bool operator==(const GroundPotential&, const GroundPotential&) = default;
};

/// Bidirectional map between free ground atoms and their variable indices.
class AtomIndex {
 public:
  std::size_t intern(const AtomKey& key);
  std::optional<std::size_t> find(const AtomKey& key) const;
  const AtomKey& at(std::size_t index) const { return atoms_.at(index); }
  std::size_t size() const noexcept { return atoms_.size(); }
  const std::vector<AtomKey>& atoms() const noexcept { return atoms_; }

  friend bool operator==(const AtomIndex& a, const AtomIndex& b) { return a.atoms_ == b.atoms_; }

 private:
  std::vector<AtomKey> atoms_;
  std::map<AtomKey, std::size_t> lookup_;
};

/// Ground program: soft potentials over n free variables, plus per-variable
/// bounds contributed by hard (weight `inf`) clauses.
class PotentialSet {
 public:
  std::size_t add_variable(const AtomKey& key);
  /// Validates weight and indices; throws std::invalid_argument.
  void add_potential(GroundPotential potential);
  /// Intersects the feasible interval of variable `index` with [lo, hi].
  void restrict_bounds(std::size_t index, double lo, double hi);

  std::size_t n_free() const noexcept { return atoms_.size(); }
  const std::vector<GroundPotential>& potentials() const noexcept { return potentials_; }
  const AtomIndex& atoms() const noexcept { return atoms_; }
  double lower(std::size_t index) const { return lower_.at(index); }
  double upper(std::size_t index) const { return upper_.at(index); }
  const std::vector<double>& lower_bounds() const noexcept { return lower_; }
  const std::vector<double>& upper_bounds() const noexcept { return upper_; }
  /// Hard clauses that produced bounds, kept for dumps.
  const std::vector<GroundPotential>& constraints() const noexcept { return constraints_; }
  void add_constraint_record(GroundPotential p) { constraints_.push_back(std::move(p)); }

  friend bool operator==(const PotentialSet&, const PotentialSet&) = default;

 private:
  std::vector<GroundPotential> potentials_;
  std::vector<GroundPotential> constraints_;
  AtomIndex atoms_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

enum class GroundingErrorKind {
  unsafe_rule,
  unknown_type,
  unknown_constant,
  unknown_predicate,
  arity_mismatch,
  infeasible,
  unsupported_hard_clause,
};

class GroundingError : public std::runtime_error {
 public:
  GroundingError(GroundingErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  GroundingErrorKind kind() const noexcept { return kind_; }

 private:
  GroundingErrorKind kind_;
};

/// Instantiates every rule over the evidence. Closed-world atoms missing from
/// the evidence read as 0; open-world atoms without evidence become free
/// variables. Clauses whose hinge is 0 for every y in the box are dropped.
/// Hard clauses must ground to at most one free atom and become bounds.
PotentialSet ground(const rules::Program& program, const rules::EvidenceSet& evidence);

/// max{1 - sum_{pos} V - sum_{neg} (1 - V), 0}. Throws std::out_of_range on a
/// free index past y.
double distance_to_satisfaction(const GroundPotential& p, std::span<const double> y);

/// Debug listing, one `weight: clause` per line.
std::string dump(const PotentialSet& set);

}  // namespace spsl::ground

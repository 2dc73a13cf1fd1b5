#include "spsl/grounder.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

namespace spsl::ground {

using rules::EvidenceSet;
using rules::Literal;
using rules::Program;
using rules::Rule;

namespace {

void check_unit(double v, const char* op) {
  if (!(v >= 0.0 && v <= 1.0))
    throw std::domain_error(std::string(op) + ": truth value outside [0,1]");
}

}  // namespace

double soft_and(double a, double b) {
  check_unit(a, "soft_and");
  check_unit(b, "soft_and");
  return std::max(0.0, a + b - 1.0);
}

double soft_or(double a, double b) {
  check_unit(a, "soft_or");
  check_unit(b, "soft_or");
  return std::min(1.0, a + b);
}

double soft_not(double a) {
  check_unit(a, "soft_not");
  return 1.0 - a;
}

std::size_t AtomIndex::intern(const AtomKey& key) {
  auto [it, inserted] = lookup_.emplace(key, atoms_.size());
  if (inserted) atoms_.push_back(key);
  return it->second;
}

std::optional<std::size_t> AtomIndex::find(const AtomKey& key) const {
  auto it = lookup_.find(key);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t PotentialSet::add_variable(const AtomKey& key) {
  std::size_t before = atoms_.size();
  std::size_t index = atoms_.intern(key);
  if (atoms_.size() != before) {
    lower_.push_back(0.0);
    upper_.push_back(1.0);
  }
  return index;
}

void PotentialSet::add_potential(GroundPotential potential) {
  if (!(potential.weight >= 0.0) || std::isinf(potential.weight))
    throw std::invalid_argument("potential weight must be finite and non-negative");
  if (potential.pos.empty() && potential.neg.empty())
    throw std::invalid_argument("potential needs at least one entry");
  auto check = [&](const Operand& op) {
    if (op.is_free() && op.index >= n_free())
      throw std::invalid_argument("potential references unknown variable " +
                                  std::to_string(op.index));
    if (!op.is_free() && !(op.value >= 0.0 && op.value <= 1.0))
      throw std::invalid_argument("observed value outside [0,1]");
  };
  for (const auto& op : potential.pos) check(op);
  for (const auto& op : potential.neg) check(op);
  potentials_.push_back(std::move(potential));
}

void PotentialSet::restrict_bounds(std::size_t index, double lo, double hi) {
  lower_.at(index) = std::max(lower_[index], lo);
  upper_.at(index) = std::min(upper_[index], hi);
  if (lower_[index] > upper_[index])
    throw GroundingError(GroundingErrorKind::infeasible,
                         "hard constraints leave no feasible value for " +
                             rules::to_string(atoms_.at(index)));
}

double distance_to_satisfaction(const GroundPotential& p, std::span<const double> y) {
  auto value = [&](const Operand& op) {
    if (!op.is_free()) return op.value;
    if (op.index >= y.size())
      throw std::out_of_range("free index " + std::to_string(op.index) + " past interpretation");
    return y[op.index];
  };
  double d = 1.0;
  for (const auto& op : p.pos) d -= value(op);
  for (const auto& op : p.neg) d -= 1.0 - value(op);
  return std::max(d, 0.0);
}

namespace {

struct LiteralValue {
  AtomKey key;
  bool negated;
  std::optional<double> observed;  // nullopt => free
};

// One satisfying substitution, ready to be emitted once ordering is fixed.
struct Grounding {
  std::vector<std::string> binding;
  std::vector<LiteralValue> literals;
};

class RuleGrounder {
 public:
  RuleGrounder(const Program& program, const EvidenceSet& evidence,
               const std::vector<std::vector<const std::pair<const AtomKey, double>*>>& by_pred,
               std::size_t rule_index)
      : program_(program),
        evidence_(evidence),
        by_pred_(by_pred),
        rule_(program.rules[rule_index]),
        rule_index_(rule_index),
        clause_(rule_.clause()) {
    collect_variables();
  }

  std::vector<Grounding> run() {
    binding_.assign(vars_.size(), nullptr);
    join(0);
    std::sort(out_.begin(), out_.end(),
              [](const Grounding& a, const Grounding& b) { return a.binding < b.binding; });
    return std::move(out_);
  }

 private:
  void collect_variables() {
    auto visit = [&](const Literal& lit) {
      const auto& pred = program_.predicate(lit.atom);
      for (std::size_t i = 0; i < lit.atom.args.size(); ++i) {
        const auto& term = lit.atom.args[i];
        if (!term.is_variable()) continue;
        if (std::find(vars_.begin(), vars_.end(), term.symbol) == vars_.end()) {
          vars_.push_back(term.symbol);
          var_types_.push_back(pred.arg_types[i]);
        }
      }
    };
    for (const auto& lit : rule_.head) visit(lit);
    for (const auto& lit : rule_.body) visit(lit);

    std::set<std::string> bound;
    for (const auto& lit : rule_.body) {
      if (lit.negated || !program_.predicate(lit.atom).closed_world) continue;
      generators_.push_back(&lit);
      for (const auto& term : lit.atom.args)
        if (term.is_variable()) bound.insert(term.symbol);
    }
    for (std::size_t v = 0; v < vars_.size(); ++v) {
      if (bound.count(vars_[v])) continue;
      auto dom = evidence_.domains().find(var_types_[v]);
      if (dom == evidence_.domains().end())
        throw GroundingError(
            GroundingErrorKind::unsafe_rule,
            "rule " + std::to_string(rule_index_) + ": variable " + vars_[v] +
                " is not bound by a positive closed-world body atom and type '" + var_types_[v] +
                "' has no domain");
      domain_vars_.push_back(v);
    }
  }

  std::size_t var_id(const std::string& name) const {
    return static_cast<std::size_t>(std::find(vars_.begin(), vars_.end(), name) - vars_.begin());
  }

  // Nested-loop join over the closed-world body atoms, skipping zero-valued
  // evidence (such a grounding is satisfied by its negated body literal).
  void join(std::size_t depth) {
    if (depth == generators_.size()) {
      enumerate_domains(0);
      return;
    }
    const Literal& lit = *generators_[depth];
    for (const auto* entry : by_pred_[lit.atom.predicate]) {
      if (entry->second <= 0.0) continue;
      const auto& args = entry->first.args;
      std::vector<std::size_t> newly_bound;
      bool ok = true;
      for (std::size_t i = 0; i < args.size() && ok; ++i) {
        const auto& term = lit.atom.args[i];
        if (!term.is_variable()) {
          ok = term.symbol == args[i];
          continue;
        }
        std::size_t v = var_id(term.symbol);
        if (binding_[v] == nullptr) {
          binding_[v] = &args[i];
          newly_bound.push_back(v);
        } else {
          ok = *binding_[v] == args[i];
        }
      }
      if (ok) join(depth + 1);
      for (std::size_t v : newly_bound) binding_[v] = nullptr;
    }
  }

  void enumerate_domains(std::size_t k) {
    if (k == domain_vars_.size()) {
      emit();
      return;
    }
    std::size_t v = domain_vars_[k];
    for (const auto& constant : evidence_.domains().at(var_types_[v])) {
      binding_[v] = &constant;
      enumerate_domains(k + 1);
    }
    binding_[v] = nullptr;
  }

  void emit() {
    Grounding g;
    g.binding.reserve(vars_.size());
    for (const auto* b : binding_) g.binding.push_back(*b);

    // Upper bound of the hinge over the unit box decides pruning.
    double constant = 1.0;
    std::map<AtomKey, double> coef;
    for (const auto& lit : clause_) {
      const auto& pred = program_.predicate(lit.atom);
      LiteralValue lv{AtomKey{pred.name, {}}, lit.negated, std::nullopt};
      for (const auto& term : lit.atom.args)
        lv.key.args.push_back(term.is_variable() ? *binding_[var_id(term.symbol)] : term.symbol);
      if (auto v = evidence_.value(lv.key)) {
        lv.observed = *v;
      } else if (pred.closed_world) {
        lv.observed = 0.0;
      }
      if (lv.observed) {
        constant -= lit.negated ? 1.0 - *lv.observed : *lv.observed;
      } else if (lit.negated) {
        constant -= 1.0;
        coef[lv.key] += 1.0;
      } else {
        coef[lv.key] -= 1.0;
      }
      g.literals.push_back(std::move(lv));
    }
    double max_hinge = constant;
    for (const auto& [key, c] : coef) max_hinge += std::max(0.0, c);
    if (max_hinge <= 0.0) return;
    out_.push_back(std::move(g));
  }

  const Program& program_;
  const EvidenceSet& evidence_;
  const std::vector<std::vector<const std::pair<const AtomKey, double>*>>& by_pred_;
  const Rule& rule_;
  std::size_t rule_index_;
  std::vector<Literal> clause_;

  std::vector<std::string> vars_;
  std::vector<std::string> var_types_;
  std::vector<const Literal*> generators_;
  std::vector<std::size_t> domain_vars_;
  std::vector<const std::string*> binding_;
  std::vector<Grounding> out_;
};

void apply_hard(PotentialSet& set, const GroundPotential& clause, const AtomKey* free_key) {
  double constant = 1.0;
  double coef = 0.0;
  std::optional<std::size_t> var;
  auto accumulate = [&](const Operand& op, bool negated) {
    if (!op.is_free()) {
      constant -= negated ? 1.0 - op.value : op.value;
      return;
    }
    if (var && *var != op.index)
      throw GroundingError(GroundingErrorKind::unsupported_hard_clause,
                           "hard clause grounds to more than one free atom");
    var = op.index;
    if (negated) {
      constant -= 1.0;
      coef += 1.0;
    } else {
      coef -= 1.0;
    }
  };
  for (const auto& op : clause.pos) accumulate(op, false);
  for (const auto& op : clause.neg) accumulate(op, true);
  if (!var || coef == 0.0)
    throw GroundingError(GroundingErrorKind::infeasible,
                         "hard clause is violated by the evidence" +
                             (free_key ? " (" + rules::to_string(*free_key) + ")" : std::string()));
  // constant + coef * y <= 0
  double limit = -constant / coef;
  if (coef < 0.0) {
    set.restrict_bounds(*var, limit, 1.0);
  } else {
    set.restrict_bounds(*var, 0.0, limit);
  }
  set.add_constraint_record(clause);
}

}  // namespace

PotentialSet ground(const Program& program, const EvidenceSet& evidence) {
  std::vector<std::vector<const std::pair<const AtomKey, double>*>> by_pred(
      program.predicates.size());
  for (const auto& entry : evidence.entries()) {
    const auto& [key, value] = entry;
    auto index = program.find(key.predicate);
    if (!index)
      throw GroundingError(GroundingErrorKind::unknown_predicate,
                           "evidence for undeclared predicate '" + key.predicate + "'");
    const auto& pred = program.predicates[*index];
    if (pred.arity() != key.args.size())
      throw GroundingError(GroundingErrorKind::arity_mismatch,
                           "evidence atom " + rules::to_string(key) + " has wrong arity");
    for (std::size_t i = 0; i < key.args.size(); ++i) {
      auto dom = evidence.domains().find(pred.arg_types[i]);
      if (dom != evidence.domains().end() &&
          std::find(dom->second.begin(), dom->second.end(), key.args[i]) == dom->second.end())
        throw GroundingError(GroundingErrorKind::unknown_constant,
                             "constant '" + key.args[i] + "' in " + rules::to_string(key) +
                                 " is not in the domain of type '" + pred.arg_types[i] + "'");
    }
    by_pred[*index].push_back(&entry);
  }

  PotentialSet out;
  for (std::size_t r = 0; r < program.rules.size(); ++r) {
    const Rule& rule = program.rules[r];
    for (auto& g : RuleGrounder(program, evidence, by_pred, r).run()) {
      GroundPotential p;
      p.weight = rule.weight;
      p.rule = r;
      const AtomKey* free_key = nullptr;
      for (const auto& lit : g.literals) {
        Operand op = lit.observed ? Operand::observed(*lit.observed)
                                  : Operand::free_var(out.add_variable(lit.key));
        if (!lit.observed) free_key = &lit.key;
        (lit.negated ? p.neg : p.pos).push_back(op);
      }
      if (rule.is_hard()) {
        apply_hard(out, p, free_key);
      } else {
        out.add_potential(std::move(p));
      }
    }
  }
  return out;
}

std::string dump(const PotentialSet& set) {
  std::ostringstream os;
  auto operand = [&](const Operand& op) {
    return op.is_free() ? rules::to_string(set.atoms().at(op.index)) : rules::format_number(op.value);
  };
  auto clause = [&](const GroundPotential& p) {
    std::string out = rules::format_number(p.weight) + ":";
    bool first = true;
    for (const auto& op : p.pos) {
      out += (first ? " " : " | ") + operand(op);
      first = false;
    }
    for (const auto& op : p.neg) {
      out += (first ? " !" : " | !") + operand(op);
      first = false;
    }
    return out;
  };
  for (const auto& p : set.potentials()) os << clause(p) << "\n";
  for (const auto& p : set.constraints()) os << clause(p) << "\n";
  return os.str();
}

}  // namespace spsl::ground

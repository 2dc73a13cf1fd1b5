#pragma once

// Weighted first-order rule language for the soft-logic engine.
//
// Program files (.psl) hold predicate declarations and weighted rules:
//
//   predicate attr_o(obj, attr, val) closed.
//   predicate candidate(men, obj) open.
//   1.0: candidate(M, O) <- object(O) & mention(M) & attr_o(O, A, V) & attr_m(M, A, V).
//   inf: !candidate(M, O) <- conflict(M, O).
//
// Evidence files (.evd) hold one `atom = value` entry per line plus optional
// `domain type = {c1, c2}` lines. `//` starts a comment in both formats.

#include <compare>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spsl::rules {

enum class ParseErrorKind {
  syntax,
  undeclared_predicate,
  duplicate_predicate,
  arity_mismatch,
  negative_weight,
  value_range,
  non_ground,
  conflicting_duplicate,
};

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, const std::string& message, std::size_t line,
             std::size_t column);

  ParseErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  ParseErrorKind kind_;
  std::size_t line_;
  std::size_t column_;
};

struct Predicate {
  std::string name;
  std::vector<std::string> arg_types;
  bool closed_world = false;

  std::size_t arity() const noexcept { return arg_types.size(); }
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct Term {
  enum class Kind { variable, constant };

  Kind kind = Kind::constant;
  std::string symbol;

  static Term variable(std::string symbol) { return {Kind::variable, std::move(symbol)}; }
  static Term constant(std::string symbol) { return {Kind::constant, std::move(symbol)}; }
  bool is_variable() const noexcept { return kind == Kind::variable; }
  friend bool operator==(const Term&, const Term&) = default;
};

// `predicate` indexes Program::predicates.
struct Atom {
  std::size_t predicate = 0;
  std::vector<Term> args;
  friend bool operator==(const Atom&, const Atom&) = default;
};

struct Literal {
  Atom atom;
  bool negated = false;
  friend bool operator==(const Literal&, const Literal&) = default;
};

inline constexpr double kHardWeight = std::numeric_limits<double>::infinity();

struct Rule {
  double weight = 1.0;
  std::vector<Literal> head;  // disjunction
  std::vector<Literal> body;  // conjunction

  bool is_hard() const noexcept { return weight == kHardWeight; }

  /// The single disjunctive clause equivalent to `head <- body`: every body
  /// literal negated, followed by the head literals.
  std::vector<Literal> clause() const;

  friend bool operator==(const Rule&, const Rule&) = default;
};

class Program {
 public:
  std::vector<Predicate> predicates;
  std::vector<Rule> rules;

  std::optional<std::size_t> find(std::string_view name) const;
  const Predicate& predicate(const Atom& atom) const { return predicates.at(atom.predicate); }

  friend bool operator==(const Program&, const Program&) = default;
};

Program parse_program(std::string_view text);
std::string format_program(const Program& program);
std::string format_atom(const Program& program, const Atom& atom);
std::string format_rule(const Program& program, const Rule& rule);

/// Identity of a ground atom: predicate name plus constant arguments.
struct AtomKey {
  std::string predicate;
  std::vector<std::string> args;

  auto operator<=>(const AtomKey&) const = default;
  bool operator==(const AtomKey&) const = default;
};

std::string to_string(const AtomKey& key);

class EvidenceSet {
 public:
  /// Records an observation. Re-setting the same value is accepted; a
  /// different value for an existing atom throws conflicting_duplicate.
  void set(const AtomKey& atom, double value);
  void add_domain(const std::string& type, std::vector<std::string> constants);

  std::optional<double> value(const AtomKey& atom) const;
  const std::map<AtomKey, double>& entries() const noexcept { return entries_; }
  const std::map<std::string, std::vector<std::string>>& domains() const noexcept {
    return domains_;
  }
  std::size_t size() const noexcept { return entries_.size(); }

  friend bool operator==(const EvidenceSet&, const EvidenceSet&) = default;

 private:
  std::map<AtomKey, double> entries_;
  std::map<std::string, std::vector<std::string>> domains_;
};

EvidenceSet parse_evidence(std::string_view text);
std::string format_evidence(const EvidenceSet& evidence);

/// Shortest decimal text that parses back to exactly `value`; "inf" for +inf.
std::string format_number(double value);

}  // namespace spsl::rules

#include "spsl/rule_lang.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <system_error>
#include <unordered_map>

namespace spsl::rules {

ParseError::ParseError(ParseErrorKind kind, const std::string& message, std::size_t line,
                       std::size_t column)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      kind_(kind),
      line_(line),
      column_(column) {}

std::vector<Literal> Rule::clause() const {
  std::vector<Literal> out;
  out.reserve(body.size() + head.size());
  for (const auto& lit : body) out.push_back({lit.atom, !lit.negated});
  for (const auto& lit : head) out.push_back(lit);
  return out;
}

std::optional<std::size_t> Program::find(std::string_view name) const {
  for (std::size_t i = 0; i < predicates.size(); ++i)
    if (predicates[i].name == name) return i;
  return std::nullopt;
}

std::string format_number(double value) {
  if (value == kHardWeight) return "inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string to_string(const AtomKey& key) {
  std::string out = key.predicate + "(";
  for (std::size_t i = 0; i < key.args.size(); ++i) {
    if (i) out += ",";
    out += key.args[i];
  }
  return out + ")";
}

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Character-level scanner with line/column tracking shared by both formats.
class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  void skip_space(bool stop_at_newline = false) {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\n' && stop_at_newline) return;
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else {
        return;
      }
    }
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

  bool consume(std::string_view token) {
    if (text_.substr(pos_, token.size()) != token) return false;
    for (std::size_t i = 0; i < token.size(); ++i) advance();
    return true;
  }

  bool at_keyword(std::string_view keyword) const {
    return text_.substr(pos_, keyword.size()) == keyword &&
           (pos_ + keyword.size() >= text_.size() || !is_word_char(text_[pos_ + keyword.size()]));
  }

  void expect(std::string_view token) {
    if (!consume(token)) fail("expected '" + std::string(token) + "'");
  }

  std::string word() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_word_char(text_[pos_])) advance();
    if (start == pos_) fail("expected identifier");
    return std::string(text_.substr(start, pos_ - start));
  }

  // Numbers may carry sign, decimal point, and exponent; "inf" is accepted.
  double number() {
    std::size_t start = pos_;
    std::size_t line = line_, col = column_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      bool exp_sign = (c == '+' || c == '-') && pos_ > start &&
                      (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E');
      if (is_word_char(c) || c == '.' || exp_sign || ((c == '-' || c == '+') && pos_ == start)) {
        // A trailing '.' terminates a statement rather than belonging to the number.
        if (c == '.' && (pos_ + 1 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))))
          break;
        advance();
      } else {
        break;
      }
    }
    std::string_view token = text_.substr(start, pos_ - start);
    if (token == "inf") return kHardWeight;
    double value = 0.0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size())
      throw ParseError(ParseErrorKind::syntax, "invalid number '" + std::string(token) + "'", line, col);
    return value;
  }

  [[noreturn]] void fail(const std::string& message,
                         ParseErrorKind kind = ParseErrorKind::syntax) const {
    throw ParseError(kind, message, line_, column_);
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

Term make_term(const std::string& symbol, const Scanner& sc) {
  char c = symbol.front();
  if (std::isupper(static_cast<unsigned char>(c))) return Term::variable(symbol);
  if (std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)))
    return Term::constant(symbol);
  sc.fail("term '" + symbol + "' must start with a letter or digit");
}

class ProgramParser {
 public:
  explicit ProgramParser(std::string_view text) : sc_(text) {}

  Program run() {
    for (;;) {
      sc_.skip_space();
      if (sc_.at_end()) break;
      if (sc_.at_keyword("predicate")) {
        sc_.consume("predicate");
        declaration();
      } else {
        rule();
      }
    }
    return std::move(program_);
  }

 private:
  void declaration() {
    sc_.skip_space();
    std::size_t line = sc_.line(), col = sc_.column();
    Predicate pred;
    pred.name = sc_.word();
    sc_.skip_space();
    sc_.expect("(");
    sc_.skip_space();
    if (!sc_.consume(")")) {
      for (;;) {
        sc_.skip_space();
        pred.arg_types.push_back(sc_.word());
        sc_.skip_space();
        if (sc_.consume(")")) break;
        sc_.expect(",");
      }
    }
    sc_.skip_space();
    if (sc_.consume("closed")) {
      pred.closed_world = true;
    } else {
      sc_.consume("open");
    }
    sc_.skip_space();
    sc_.expect(".");
    if (program_.find(pred.name))
      throw ParseError(ParseErrorKind::duplicate_predicate,
                       "predicate '" + pred.name + "' declared twice", line, col);
    program_.predicates.push_back(std::move(pred));
  }

  void rule() {
    std::size_t line = sc_.line(), col = sc_.column();
    Rule r;
    r.weight = sc_.number();
    if (std::isnan(r.weight) || r.weight < 0.0)
      throw ParseError(ParseErrorKind::negative_weight, "rule weight must be non-negative", line,
                       col);
    sc_.skip_space();
    sc_.expect(":");
    r.head = literals("|");
    sc_.skip_space();
    if (sc_.consume("<-")) r.body = literals("&");
    sc_.skip_space();
    sc_.expect(".");
    program_.rules.push_back(std::move(r));
  }

  std::vector<Literal> literals(std::string_view separator) {
    std::vector<Literal> out;
    for (;;) {
      out.push_back(literal());
      sc_.skip_space();
      if (!sc_.consume(separator)) break;
    }
    return out;
  }

  Literal literal() {
    sc_.skip_space();
    Literal lit;
    lit.negated = sc_.consume("!");
    sc_.skip_space();
    std::size_t line = sc_.line(), col = sc_.column();
    std::string name = sc_.word();
    auto index = program_.find(name);
    if (!index)
      throw ParseError(ParseErrorKind::undeclared_predicate,
                       "undeclared predicate '" + name + "'", line, col);
    lit.atom.predicate = *index;
    sc_.skip_space();
    sc_.expect("(");
    sc_.skip_space();
    if (!sc_.consume(")")) {
      for (;;) {
        sc_.skip_space();
        lit.atom.args.push_back(make_term(sc_.word(), sc_));
        sc_.skip_space();
        if (sc_.consume(")")) break;
        sc_.expect(",");
      }
    }
    const auto& pred = program_.predicates[*index];
    if (lit.atom.args.size() != pred.arity())
      throw ParseError(ParseErrorKind::arity_mismatch,
                       "predicate '" + name + "' expects " + std::to_string(pred.arity()) +
                           " argument(s), got " + std::to_string(lit.atom.args.size()),
                       line, col);
    return lit;
  }

  Scanner sc_;
  Program program_;
};

std::string format_literal(const Program& program, const Literal& lit) {
  return (lit.negated ? "!" : "") + format_atom(program, lit.atom);
}

}  // namespace

Program parse_program(std::string_view text) { return ProgramParser(text).run(); }

std::string format_atom(const Program& program, const Atom& atom) {
  std::string out = program.predicate(atom).name + "(";
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i) out += ", ";
    out += atom.args[i].symbol;
  }
  return out + ")";
}

std::string format_rule(const Program& program, const Rule& rule) {
  std::string out = format_number(rule.weight) + ": ";
  for (std::size_t i = 0; i < rule.head.size(); ++i) {
    if (i) out += " | ";
    out += format_literal(program, rule.head[i]);
  }
  if (!rule.body.empty()) {
    out += " <- ";
    for (std::size_t i = 0; i < rule.body.size(); ++i) {
      if (i) out += " & ";
      out += format_literal(program, rule.body[i]);
    }
  }
  return out + ".";
}

std::string format_program(const Program& program) {
  std::string out;
  for (const auto& pred : program.predicates) {
    out += "predicate " + pred.name + "(";
    for (std::size_t i = 0; i < pred.arg_types.size(); ++i) {
      if (i) out += ", ";
      out += pred.arg_types[i];
    }
    out += pred.closed_world ? ") closed.\n" : ") open.\n";
  }
  for (const auto& rule : program.rules) out += format_rule(program, rule) + "\n";
  return out;
}

// --- evidence ---------------------------------------------------------------

void EvidenceSet::set(const AtomKey& atom, double value) {
  if (!(value >= 0.0 && value <= 1.0))
    throw ParseError(ParseErrorKind::value_range,
                     "value for " + to_string(atom) + " outside [0,1]", 0, 0);
  auto [it, inserted] = entries_.emplace(atom, value);
  if (!inserted && it->second != value)
    throw ParseError(ParseErrorKind::conflicting_duplicate,
                     "conflicting values for " + to_string(atom), 0, 0);
}

void EvidenceSet::add_domain(const std::string& type, std::vector<std::string> constants) {
  auto& dom = domains_[type];
  for (auto& c : constants) {
    if (std::find(dom.begin(), dom.end(), c) == dom.end()) dom.push_back(std::move(c));
  }
}

std::optional<double> EvidenceSet::value(const AtomKey& atom) const {
  auto it = entries_.find(atom);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

EvidenceSet parse_evidence(std::string_view text) {
  EvidenceSet evidence;
  Scanner sc(text);
  for (;;) {
    sc.skip_space();
    if (sc.at_end()) break;
    std::size_t line = sc.line(), col = sc.column();
    std::string name = sc.word();
    sc.skip_space(true);
    if (name == "domain" && sc.peek() != '(') {
      std::string type = sc.word();
      sc.skip_space(true);
      sc.expect("=");
      sc.skip_space(true);
      sc.expect("{");
      std::vector<std::string> constants;
      sc.skip_space(true);
      if (!sc.consume("}")) {
        for (;;) {
          sc.skip_space(true);
          constants.push_back(sc.word());
          sc.skip_space(true);
          if (sc.consume("}")) break;
          sc.expect(",");
        }
      }
      evidence.add_domain(type, std::move(constants));
      continue;
    }
    AtomKey key{name, {}};
    sc.expect("(");
    sc.skip_space(true);
    if (!sc.consume(")")) {
      for (;;) {
        sc.skip_space(true);
        std::size_t arg_line = sc.line(), arg_col = sc.column();
        std::string arg = sc.word();
        if (std::isupper(static_cast<unsigned char>(arg.front())))
          throw ParseError(ParseErrorKind::non_ground,
                           "evidence atom has variable '" + arg + "'", arg_line, arg_col);
        key.args.push_back(std::move(arg));
        sc.skip_space(true);
        if (sc.consume(")")) break;
        sc.expect(",");
      }
    }
    sc.skip_space(true);
    sc.expect("=");
    sc.skip_space(true);
    double value = sc.number();
    try {
      evidence.set(key, value);
    } catch (const ParseError& e) {
      throw ParseError(e.kind(),
                       e.kind() == ParseErrorKind::value_range
                           ? "value " + format_number(value) + " for " + to_string(key) +
                                 " outside [0,1]"
                           : "conflicting values for " + to_string(key),
                       line, col);
    }
  }
  return evidence;
}

std::string format_evidence(const EvidenceSet& evidence) {
  std::ostringstream out;
  for (const auto& [type, constants] : evidence.domains()) {
    out << "domain " << type << " = {";
    for (std::size_t i = 0; i < constants.size(); ++i) out << (i ? ", " : "") << constants[i];
    out << "}\n";
  }
  for (const auto& [key, value] : evidence.entries())
    out << to_string(key) << " = " << format_number(value) << "\n";
  return out.str();
}

}  // namespace spsl::rules

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spsl/grounder.hpp"
#include "support/random_potentials.hpp"

using namespace spsl;
using ground::GroundingError;
using ground::GroundingErrorKind;
using ground::GroundPotential;
using ground::Operand;

namespace {

constexpr const char* kDecls = R"(
predicate object(obj) closed.
predicate mention(men) closed.
predicate attr_o(obj, attr, val) closed.
predicate attr_m(men, attr, val) closed.
predicate consistent(rel, obj, obj, men, men) closed.
predicate candidate(men, obj) open.
)";

constexpr const char* kW1 =
    "1.5: candidate(M, O) <- object(O) & mention(M) & attr_o(O, A, V) & attr_m(M, A, V).\n";
constexpr const char* kW2 =
    "0.7: candidate(M, O) <- object(O) & mention(M) & candidate(M1, O1) & "
    "consistent(R, O, O1, M, M1).\n";

// Two mentions, three objects. Attributes agree on (m1,o1) and (m2,o2) only.
// consistent(left, o, o', m1, m2) holds for every ordered pair o != o'.
rules::EvidenceSet fixture_evidence() {
  rules::EvidenceSet e;
  for (const char* o : {"o1", "o2", "o3"}) e.set({"object", {o}}, 1.0);
  for (const char* m : {"m1", "m2"}) e.set({"mention", {m}}, 1.0);
  e.set({"attr_o", {"o1", "color", "red"}}, 1.0);
  e.set({"attr_o", {"o2", "color", "blue"}}, 1.0);
  e.set({"attr_o", {"o3", "shape", "cube"}}, 1.0);
  e.set({"attr_m", {"m1", "color", "red"}}, 1.0);
  e.set({"attr_m", {"m2", "color", "blue"}}, 1.0);
  for (const char* a : {"o1", "o2", "o3"})
    for (const char* b : {"o1", "o2", "o3"})
      if (std::string(a) != b) e.set({"consistent", {"left", a, b, "m1", "m2"}}, 1.0);
  return e;
}

ground::PotentialSet ground_text(const std::string& program, const rules::EvidenceSet& e) {
  return ground::ground(rules::parse_program(program), e);
}

GroundingErrorKind grounding_error(const std::string& program, const rules::EvidenceSet& e) {
  try {
    ground_text(program, e);
  } catch (const GroundingError& err) {
    return err.kind();
  }
  ADD_FAILURE() << "expected a grounding error";
  return GroundingErrorKind::unsafe_rule;
}

double unit(std::mt19937_64& rng) { return spsl::testing::unit(rng); }

}  // namespace

TEST(SoftLogic, WorkedValues) {
  EXPECT_NEAR(ground::soft_and(0.7, 0.6), 0.3, 1e-12);
  EXPECT_NEAR(ground::soft_or(0.7, 0.6), 1.0, 1e-12);
  EXPECT_NEAR(ground::soft_not(0.7), 0.3, 1e-12);
  EXPECT_EQ(ground::soft_and(0.2, 0.3), 0.0);
  EXPECT_NEAR(ground::soft_or(0.2, 0.3), 0.5, 1e-12);
}

TEST(SoftLogic, RejectsOutOfRange) {
  EXPECT_THROW(ground::soft_and(1.2, 0.5), std::domain_error);
  EXPECT_THROW(ground::soft_or(0.5, -0.1), std::domain_error);
  EXPECT_THROW(ground::soft_not(1.0000001), std::domain_error);
  EXPECT_THROW(ground::soft_not(std::nan("")), std::domain_error);
}

TEST(SoftLogicProperty, IdentitiesOnGrid) {
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      double a = i / 100.0, b = j / 100.0;
      EXPECT_NEAR(ground::soft_not(ground::soft_and(a, b)),
                  ground::soft_or(ground::soft_not(a), ground::soft_not(b)), 1e-12);
      EXPECT_NEAR(ground::soft_not(ground::soft_or(a, b)),
                  ground::soft_and(ground::soft_not(a), ground::soft_not(b)), 1e-12);
      EXPECT_NEAR(ground::soft_not(ground::soft_not(a)), a, 1e-12);
      EXPECT_NEAR(ground::soft_and(a, b), std::max(0.0, a + b - 1.0), 1e-12);
      EXPECT_NEAR(ground::soft_or(a, b), std::min(1.0, a + b), 1e-12);
      EXPECT_LE(ground::soft_and(a, b), std::min(a, b) + 1e-12);
      EXPECT_GE(ground::soft_or(a, b), std::max(a, b) - 1e-12);
    }
  }
}

TEST(Distance, WorkedValues) {
  GroundPotential single{1.0, {Operand::free_var(0)}, {}, 0};
  std::vector<double> y{0.4};
  EXPECT_NEAR(ground::distance_to_satisfaction(single, y), 0.6, 1e-12);

  GroundPotential pair{1.0, {Operand::free_var(0)}, {Operand::free_var(1)}, 0};
  y = {0.3, 0.9};
  EXPECT_NEAR(ground::distance_to_satisfaction(pair, y), 0.6, 1e-12);

  GroundPotential observed{1.0, {Operand::observed(0.25)}, {Operand::observed(0.5)}, 0};
  EXPECT_NEAR(ground::distance_to_satisfaction(observed, {}), 0.25, 1e-12);

  EXPECT_THROW(ground::distance_to_satisfaction(pair, std::vector<double>{0.1}),
               std::out_of_range);
}

TEST(DistanceProperty, BooleanInterpretationsMatchClassicalSatisfaction) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t n = 1 + rng() % 5;
    GroundPotential p;
    std::size_t lits = 1 + rng() % 4;
    for (std::size_t l = 0; l < lits; ++l) (rng() % 2 ? p.pos : p.neg).push_back(Operand::free_var(rng() % n));
    std::vector<double> y(n);
    for (auto& v : y) v = static_cast<double>(rng() % 2);
    bool sat = false;
    for (const auto& op : p.pos) sat = sat || y[op.index] == 1.0;
    for (const auto& op : p.neg) sat = sat || y[op.index] == 0.0;
    double d = ground::distance_to_satisfaction(p, y);
    EXPECT_EQ(d == 0.0, sat);
    if (!sat) EXPECT_EQ(d, 1.0);
  }
}

TEST(DistanceProperty, ConvexAlongSegments) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t n = 1 + rng() % 4;
    GroundPotential p;
    std::size_t lits = 1 + rng() % 4;
    for (std::size_t l = 0; l < lits; ++l) {
      Operand op = rng() % 4 == 0 ? Operand::observed(unit(rng)) : Operand::free_var(rng() % n);
      (rng() % 2 ? p.pos : p.neg).push_back(op);
    }
    std::vector<double> a(n), b(n), mid(n);
    double t = unit(rng);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = unit(rng);
      b[i] = unit(rng);
      mid[i] = t * a[i] + (1 - t) * b[i];
    }
    double lhs = ground::distance_to_satisfaction(p, mid);
    double rhs = t * ground::distance_to_satisfaction(p, a) +
                 (1 - t) * ground::distance_to_satisfaction(p, b);
    EXPECT_LE(lhs, rhs + 1e-12);
  }
}

TEST(Grounder, AttributeRuleGroundsOnlyMatchingPairs) {
  auto set = ground_text(std::string(kDecls) + kW1, fixture_evidence());
  ASSERT_EQ(set.potentials().size(), 2u);
  ASSERT_EQ(set.n_free(), 2u);
  EXPECT_EQ(set.atoms().at(set.potentials()[0].pos[0].index),
            (rules::AtomKey{"candidate", {"m1", "o1"}}));
  EXPECT_EQ(set.atoms().at(set.potentials()[1].pos[0].index),
            (rules::AtomKey{"candidate", {"m2", "o2"}}));
  // Observed body atoms are all 1, so the hinge reduces to 1 - y.
  for (const auto& p : set.potentials()) {
    EXPECT_DOUBLE_EQ(p.weight, 1.5);
    EXPECT_EQ(p.neg.size(), 4u);
    for (const auto& op : p.neg) EXPECT_EQ(op, Operand::observed(1.0));
  }
}

TEST(Grounder, BothRulesReachAllSixPairs) {
  auto set = ground_text(std::string(kDecls) + kW1 + kW2, fixture_evidence());
  EXPECT_EQ(set.n_free(), 6u);
  std::size_t w1 = 0, w2 = 0;
  for (const auto& p : set.potentials()) (p.rule == 0 ? w1 : w2)++;
  EXPECT_EQ(w1, 2u);
  EXPECT_EQ(w2, 6u);  // one per ordered object pair o != o'
  for (const char* m : {"m1", "m2"})
    for (const char* o : {"o1", "o2", "o3"})
      EXPECT_TRUE(set.atoms().find({"candidate", {m, o}}).has_value()) << m << o;
}

TEST(Grounder, SelfReferentialRuleIsPruned) {
  // candidate(M,O) in both head and body: the hinge is 0 everywhere.
  auto set = ground_text(std::string(kDecls) +
                             "1: candidate(M, O) <- object(O) & mention(M) & candidate(M, O) & "
                             "candidate(M1, O1) & consistent(R, O, O1, M, M1).\n",
                         fixture_evidence());
  EXPECT_TRUE(set.potentials().empty());
}

TEST(Grounder, ObservedZeroBodyDropsClause) {
  auto e = fixture_evidence();
  e.set({"attr_m", {"m1", "shape", "cube"}}, 0.0);
  auto set = ground_text(std::string(kDecls) + kW1, e);
  EXPECT_EQ(set.potentials().size(), 2u);
}

TEST(Grounder, EmptyEvidenceGivesNothing) {
  auto set = ground_text(std::string(kDecls) + kW1 + kW2, {});
  EXPECT_EQ(set.n_free(), 0u);
  EXPECT_TRUE(set.potentials().empty());
}

TEST(Grounder, DeterministicAcrossRuns) {
  auto program = rules::parse_program(std::string(kDecls) + kW1 + kW2);
  auto a = ground::ground(program, fixture_evidence());
  auto b = ground::ground(program, fixture_evidence());
  EXPECT_EQ(a, b);
  EXPECT_EQ(ground::dump(a), ground::dump(b));
}

TEST(Grounder, UnsafeRuleRejected) {
  EXPECT_EQ(grounding_error(std::string(kDecls) + "1: candidate(M, O) <- mention(M).\n",
                            fixture_evidence()),
            GroundingErrorKind::unsafe_rule);
}

TEST(Grounder, DomainMakesNegatedVariableSafe) {
  auto e = fixture_evidence();
  e.add_domain("obj", {"o1", "o2", "o3"});
  auto set = ground_text(std::string(kDecls) + "1: candidate(M, O) <- mention(M).\n", e);
  EXPECT_EQ(set.n_free(), 6u);
  EXPECT_EQ(set.potentials().size(), 6u);
}

TEST(Grounder, EvidenceValidation) {
  auto e = fixture_evidence();
  e.add_domain("obj", {"o1", "o2"});
  EXPECT_EQ(grounding_error(std::string(kDecls) + kW1, e), GroundingErrorKind::unknown_constant);

  rules::EvidenceSet bad;
  bad.set({"nosuch", {"a"}}, 1.0);
  EXPECT_EQ(grounding_error(kDecls, bad), GroundingErrorKind::unknown_predicate);

  rules::EvidenceSet arity;
  arity.set({"object", {"a", "b"}}, 1.0);
  EXPECT_EQ(grounding_error(kDecls, arity), GroundingErrorKind::arity_mismatch);
}

TEST(Grounder, HardClausesBecomeBounds) {
  auto e = fixture_evidence();
  e.set({"attr_m", {"m1", "shape", "cube"}}, 1.0);
  auto set = ground_text(std::string(kDecls) +
                             "inf: !candidate(M, O) <- attr_o(O, A, V) & attr_m(M, A, V).\n"
                             "1: candidate(M, O) <- object(O) & mention(M).\n",
                         e);
  EXPECT_EQ(set.n_free(), 6u);
  auto forced = [&](const char* m, const char* o) {
    return set.upper(*set.atoms().find({"candidate", {m, o}}));
  };
  EXPECT_EQ(forced("m1", "o1"), 0.0);
  EXPECT_EQ(forced("m1", "o3"), 0.0);
  EXPECT_EQ(forced("m2", "o2"), 0.0);
  EXPECT_EQ(forced("m1", "o2"), 1.0);
  EXPECT_EQ(set.constraints().size(), 3u);
}

TEST(Grounder, InfeasibleAndUnsupportedHardClauses) {
  auto e = fixture_evidence();
  EXPECT_EQ(grounding_error(std::string(kDecls) +
                                "inf: candidate(M, O) <- attr_o(O, A, V) & attr_m(M, A, V).\n"
                                "inf: !candidate(M, O) <- attr_o(O, A, V) & attr_m(M, A, V).\n",
                            e),
            GroundingErrorKind::infeasible);
  EXPECT_EQ(grounding_error(std::string(kDecls) +
                                "inf: candidate(M, O) <- object(O) & mention(M) & "
                                "candidate(M1, O1) & consistent(R, O, O1, M, M1).\n",
                            e),
            GroundingErrorKind::unsupported_hard_clause);
}

TEST(PotentialSet, ValidatesPotentials) {
  ground::PotentialSet set;
  set.add_variable({"y", {"0"}});
  EXPECT_THROW(set.add_potential({-1.0, {Operand::free_var(0)}, {}, 0}), std::invalid_argument);
  EXPECT_THROW(set.add_potential({1.0, {Operand::free_var(3)}, {}, 0}), std::invalid_argument);
  EXPECT_THROW(set.add_potential({1.0, {}, {}, 0}), std::invalid_argument);
  EXPECT_THROW(set.add_potential({1.0, {Operand::observed(2.0)}, {}, 0}), std::invalid_argument);
  EXPECT_NO_THROW(set.add_potential({0.0, {Operand::free_var(0)}, {}, 0}));
  EXPECT_THROW(set.restrict_bounds(0, 0.6, 0.4), GroundingError);
}

#include <catch2/catch_amalgamated.hpp>

#include "pfaff/cinf.hpp"
#include "pfaff/parse.hpp"

using namespace pfaff;

namespace {

Chart make_chart(std::vector<std::string> coords, double lo = 0.5, double hi = 2.0) {
  Chart c;
  c.coords = std::move(coords);
  c.box.assign(c.coords.size(), {lo, hi});
  return c;
}

HamiltonianSystem toda_system() {
  Chart c = make_chart({"q", "Q", "p", "P"}, 0.25, 2.0);
  std::vector<Expr> upper(6, Expr::number(0LL));
  upper[JacobiStructure::upper_index(0, 2, 4)] = Expr::number(1LL);
  upper[JacobiStructure::upper_index(1, 3, 4)] = Expr::number(1LL);
  HamiltonianSystem sys;
  sys.S = JacobiStructure::make(c, upper, std::nullopt);
  sys.H = parse("p^2 + P^2/4 + exp(q)");
  sys.family = {Expr::symbol("P"), Expr::symbol("Q")};
  sys.auxiliary = Expr::symbol("p");
  sys.closure[{1, 0}] = Expr::number(0LL);
  sys.closure[{2, 0}] = parse("u1/2");
  sys.closure[{2, 1}] = Expr::number(1LL);
  return sys;
}

HamiltonianSystem waterbag_system() {
  Chart c;
  c.coords = {"w1", "c1", "w2", "c2"};
  c.box = {{0.8, 1.2}, {0.5, 1.5}, {1.6, 2.4}, {0.2, 0.8}};
  KForm om;
  om.degree = 2;
  om.coeffs[{0, 1}] = parse("1/2");
  om.coeffs[{2, 3}] = parse("1/2");
  HamiltonianSystem sys;
  sys.S = symplectic_to_jacobi(c, om);
  sys.H = parse("1/4*c1^2*w1 + 1/12*w1^3 + 1/4*c2^2*w2 + 1/12*w2^3");
  sys.family = {parse("1/4*c1^2*w1 + 1/12*w1^3"), Expr::symbol("w1")};
  sys.auxiliary = Expr::symbol("w2");
  sys.closure[{1, 0}] = Expr::number(0LL);
  sys.closure[{2, 0}] = parse("u2*sqrt(4*u1/u2 - u2^2/3)");
  sys.closure[{2, 1}] = parse("u2*sqrt(4*u1/u2 - u2^2/3)");
  return sys;
}

HamiltonianSystem lcs_system() {
  Chart c = make_chart({"x", "y", "w", "z"}, 0.2, 1.5);
  KForm omega;
  omega.degree = 2;
  omega.coeffs[{0, 1}] = parse("exp(x)");
  omega.coeffs[{2, 3}] = parse("exp(x)");
  KForm theta;
  theta.degree = 1;
  theta.coeffs[{0}] = Expr::number(1LL);
  HamiltonianSystem sys;
  sys.S = lcs_to_jacobi(c, omega, theta, 42);
  sys.H = parse("exp(x)*y");
  sys.family = {Expr::number(1LL), Expr::symbol("z")};
  VectorField aux;
  aux.comp = {Expr::number(0LL), Expr::number(0LL), Expr::number(0LL),
              Expr::number(1LL)};
  sys.auxiliary = aux;
  sys.closure[{1, 0}] = parse("u1");
  sys.closure[{2, 0}] = parse("u2");
  sys.closure[{2, 1}] = Expr::number(0LL);
  return sys;
}

HamiltonianSystem contact_system() {
  Chart c = make_chart({"x", "y", "z"}, 0.5, 2.0);
  KForm eta;
  eta.degree = 1;
  eta.coeffs[{0}] = parse("-y");
  eta.coeffs[{2}] = Expr::number(1LL);
  HamiltonianSystem sys;
  sys.S = contact_to_jacobi(c, eta, 42);
  sys.H = Expr::symbol("z");
  sys.family = {Expr::number(1LL)};
  VectorField aux;
  aux.comp = {Expr::number(1LL), Expr::number(0LL), Expr::number(0LL)};
  sys.auxiliary = aux;
  sys.closure[{1, 0}] = parse("u1");
  return sys;
}

}  // namespace

TEST_CASE("check_independence: Toda passes at full rank") {
  auto sys = toda_system();
  auto rep = check_independence(sys, 100, 11);
  CHECK(rep.gradient_pass);
  CHECK(rep.vector_field_pass);
  CHECK(rep.gradient_pass_fraction == 1.0);
}

TEST_CASE("check_independence: duplicate function fails") {
  auto sys = toda_system();
  sys.family = {Expr::symbol("P"), sys.H};
  auto rep = check_independence(sys, 100, 11);
  CHECK_FALSE(rep.gradient_pass);
  CHECK_FALSE(rep.vector_field_pass);
}

TEST_CASE("check_independence: LCS family with f1 = 1 passes on vector fields") {
  auto sys = lcs_system();
  auto rep = check_independence(sys, 100, 13);
  CHECK(rep.vector_field_pass);       // X_1 spans the E direction
  CHECK_FALSE(rep.gradient_pass);     // d(1) = 0: gradient rank deficit
}

TEST_CASE("check_closure_symbolic: Toda table has zero residual") {
  auto sys = toda_system();
  auto rep = check_closure_symbolic(sys, 100, 17);
  CHECK(rep.pass);
  for (const auto& p : rep.pairs) CHECK(p.max_residual <= 1e-12);
}

TEST_CASE("check_closure_symbolic: waterbag table on the positive branch") {
  auto sys = waterbag_system();
  auto rep = check_closure_symbolic(sys, 100, 19);
  CHECK(rep.pass);
}

TEST_CASE("check_closure_symbolic: schema violations are rejected") {
  auto sys = toda_system();
  sys.closure[{1, 0}] = parse("u2");  // references u2 with j = 1
  CHECK_THROWS_AS(check_closure_symbolic(sys, 10, 3), StructureError);
}

TEST_CASE("check_closure_numeric: Toda passes, rank stays flat") {
  auto sys = toda_system();
  sys.closure.clear();
  auto rep = check_closure_numeric(sys, 100, 23);
  CHECK(rep.pass);
  for (const auto& p : rep.pairs) CHECK(p.jump_fraction == 0.0);
}

TEST_CASE("check_closure_numeric: negative control detects the rank jump") {
  Chart c = make_chart({"q1", "q2", "p1", "p2"}, 0.25, 2.0);
  std::vector<Expr> upper(6, Expr::number(0LL));
  upper[JacobiStructure::upper_index(0, 2, 4)] = Expr::number(1LL);
  upper[JacobiStructure::upper_index(1, 3, 4)] = Expr::number(1LL);
  HamiltonianSystem sys;
  sys.S = JacobiStructure::make(c, upper, std::nullopt);
  sys.H = parse("1/2*p1^2 + 1/2*p2^2");
  sys.family = {Expr::symbol("q1"), Expr::symbol("q2")};
  auto rep = check_closure_numeric(sys, 100, 29);
  CHECK_FALSE(rep.pass);
  bool found = false;
  for (const auto& p : rep.pairs)
    if (p.j == 1 && p.i == 0) {
      found = true;
      CHECK(p.jump_fraction >= 0.95);
    }
  CHECK(found);
}

TEST_CASE("check_closure_numeric: zero bracket passes trivially") {
  auto sys = toda_system();
  sys.closure.clear();
  // pair (1,0) is {P, H} = 0
  auto rep = check_closure_numeric(sys, 50, 31);
  for (const auto& p : rep.pairs)
    if (p.j == 1 && p.i == 0) CHECK(p.pass);
}

TEST_CASE("closure invariant: symbolic pass implies numeric pass") {
  for (auto sys : {toda_system(), waterbag_system()}) {
    auto symb = check_closure_symbolic(sys, 60, 37);
    REQUIRE(symb.pass);
    auto num = check_closure_numeric(sys, 60, 37);
    CHECK(num.pass);
  }
}

TEST_CASE("swapped Toda family breaks triangularity") {
  auto sys = toda_system();
  sys.family = {Expr::symbol("Q"), Expr::symbol("P")};
  sys.closure.clear();
  auto rep = check_closure_numeric(sys, 100, 41);
  CHECK_FALSE(rep.pass);
  for (const auto& p : rep.pairs)
    if (p.j == 1 && p.i == 0) CHECK(p.jump_fraction > 0.9);
}

TEST_CASE("check_reeb_compatibility") {
  // Poisson: automatic pass
  auto toda = toda_system();
  auto rep = check_reeb_compatibility(toda, 50, 43);
  CHECK(rep.auto_pass);
  CHECK(rep.pass);

  // LCS with f1 = 1: the Euler term is proportional to E = -X_{f1}
  auto lcs = lcs_system();
  auto repl = check_reeb_compatibility(lcs, 60, 47);
  CHECK_FALSE(repl.auto_pass);
  CHECK(repl.pass);

  // contact with 1-homogeneous F10 = u1: Euler term vanishes identically
  auto ct = contact_system();
  auto repc = check_reeb_compatibility(ct, 60, 53);
  CHECK(repc.pass);
  for (const auto& p : repc.pairs) CHECK(p.max_residual <= 1e-12);

  // missing table is an error
  auto bare = lcs_system();
  bare.closure.clear();
  CHECK_THROWS_AS(check_reeb_compatibility(bare, 10, 3), StructureError);
}

TEST_CASE("extend_time_dependent") {
  Chart base = make_chart({"q", "p"}, -1.0, 1.0);
  Expr H = parse("1/2*p^2 + q*t");
  auto sys = extend_time_dependent(H, base);

  REQUIRE(sys.dim() == 4);
  CHECK(sys.S.chart.coords == std::vector<std::string>{"t", "q", "Ecoord", "p"});
  CHECK(equal(sys.H, simplify(parse("1/2*p^2 + q*t + Ecoord"))));
  REQUIRE(sys.family.size() == 1);
  CHECK(equal(sys.family[0], Expr::symbol("t")));

  // flow direction: X_{H_ext} = (1, p, -q, -t)
  auto X = hamiltonian_vf(sys.S, sys.H);
  CHECK(equal(X.comp[0], Expr::number(1LL)));
  CHECK(equal(X.comp[1], Expr::symbol("p")));
  CHECK(equal(simplify(X.comp[2]), simplify(parse("-q"))));
  CHECK(equal(simplify(X.comp[3]), simplify(parse("-t"))));

  // autonomous H still extends and t advances at unit rate
  auto sys2 = extend_time_dependent(parse("1/2*p^2"), base);
  auto X2 = hamiltonian_vf(sys2.S, sys2.H);
  CHECK(equal(X2.comp[0], Expr::number(1LL)));

  // structure passes the axioms and is even-dimensional
  auto rep = check_jacobi_axioms(sys.S, 50, 59);
  CHECK(rep.pass);
  CHECK(sys.dim() % 2 == 0);

  // closure (numeric) for the reference family (t, p)
  sys.family.push_back(Expr::symbol("p"));
  sys.auxiliary = Expr::symbol("q");
  auto cl = check_closure_numeric(sys, 100, 61);
  CHECK(cl.pass);
  auto ind = check_independence(sys, 100, 61);
  CHECK(ind.gradient_pass);
  CHECK(ind.vector_field_pass);

  // collisions are rejected
  CHECK_THROWS_AS(extend_time_dependent(parse("Ecoord + p^2"), base), StructureError);
  Chart tbase = make_chart({"t", "p"}, -1.0, 1.0);
  CHECK_THROWS_AS(extend_time_dependent(parse("p^2"), tbase), StructureError);
}

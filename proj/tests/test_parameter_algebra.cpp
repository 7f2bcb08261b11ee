#include <cmath>
#include <random>

#include "emergence/parameter_algebra.hpp"
#include "support.hpp"

using namespace emergence;

namespace {

SpacePtr grid_space(int n) { return FieldSpace::on_grid(GridGeometry{{n}, {1.0}, true}); }

Operator random_operator(Rng& rng, const SpacePtr& space) {
  std::normal_distribution<double> d;
  Matrix m(space->dim(), space->dim());
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) m(i, j) = Scalar(d(rng), d(rng));
  }
  return Operator(space, m);
}

Operator random_diagonal(Rng& rng, const SpacePtr& space) {
  std::uniform_real_distribution<double> d(0.5, 2.0);
  Vector v(space->dim());
  for (long i = 0; i < v.size(); ++i) v(i) = d(rng);
  return Operator(space, v.asDiagonal());
}

Operator random_circulant(Rng& rng, const SpacePtr& space) {
  std::uniform_real_distribution<double> d(0.5, 2.0);
  Vector sym(space->dim());
  for (long i = 0; i < sym.size(); ++i) sym(i) = std::polar(d(rng), d(rng));
  return circulant_from_symbol(space, sym, OperatorTags{true, std::nullopt, {}});
}

double dist(const Param& a, const Param& b) { return (a - b).norm(); }

// Commutative-algebra and action laws on random samples.
void check_laws(const ParameterAlgebra& alg, const SpacePtr& space, Rng& rng, int trials,
                const std::function<Operator(Rng&)>& make_psi) {
  for (int t = 0; t < trials; ++t) {
    const Param a = alg.sample(rng), b = alg.sample(rng), c = alg.sample(rng);
    CHECK(alg.contains(a));
    CHECK(dist(alg.mul(a, b), alg.mul(b, a)) < 1e-12);
    CHECK(dist(alg.add(a, b), alg.add(b, a)) < 1e-12);
    CHECK(dist(alg.mul(alg.mul(a, b), c), alg.mul(a, alg.mul(b, c))) < 1e-12);
    CHECK(dist(alg.mul(a, alg.add(b, c)), alg.add(alg.mul(a, b), alg.mul(a, c))) < 1e-12);
    CHECK(dist(alg.mul(a, alg.one()), a) == 0.0);
    CHECK(dist(alg.add(a, alg.zero()), a) == 0.0);
    const Param r = alg.sqrt_select(a);
    CHECK(dist(alg.mul(r, r), a) < 1e-12 * std::max(1.0, a.norm()));
    const Operator psi = make_psi(rng);
    // product law and Eckmann-Hilton commutation of the action
    const Operator ab = alg.act(alg.mul(a, b), psi);
    const Operator a_b = alg.act(a, alg.act(b, psi));
    const Operator b_a = alg.act(b, alg.act(a, psi));
    CHECK(frobenius_distance(ab, a_b) < 1e-10 * std::max(1.0, ab.matrix().norm()));
    CHECK(frobenius_distance(a_b, b_a) < 1e-10 * std::max(1.0, ab.matrix().norm()));
    CHECK(frobenius_distance(alg.act(alg.one(), psi), psi) < 1e-12 * std::max(1.0, psi.matrix().norm()));
  }
  (void)space;
}

}  // namespace

TEST_CASE("property: complex scalars satisfy the algebra and action laws") {
  Rng rng(1);
  ComplexScalars alg;
  auto space = FieldSpace::euclidean(3, ScalarKind::kComplex);
  check_laws(alg, space, rng, 200, [&](Rng& r) { return random_operator(r, space); });
  CHECK(alg.sqrt_branch() == "principal");
  Param m = Param::Constant(1, -4.0);
  CHECK(std::abs(alg.sqrt_select(m)(0) - Scalar(0.0, 2.0)) < 1e-15);
}

TEST_CASE("nonnegative reals form a cone") {
  Rng rng(2);
  NonnegativeReals alg;
  auto space = FieldSpace::euclidean(2);
  check_laws(alg, space, rng, 200, [&](Rng& r) { return random_operator(r, space); });
  CHECK_ERROR_CODE(alg.sqrt_select(Param::Constant(1, -1.0)), ErrorCode::kNoSquareRoot);
  CHECK_ERROR_CODE(alg.scale(-1.0, Param::Constant(1, 2.0)), ErrorCode::kNotInCarrier);
  CHECK_ERROR_CODE(alg.act(Param::Constant(1, -1.0), Operator::identity(space)), ErrorCode::kNotInCarrier);
  CHECK(alg.scale(2.0, Param::Constant(1, 3.0))(0) == Scalar(6.0));
  CHECK_FALSE(alg.contains(Param::Constant(1, Scalar(1.0, 0.5))));
}

TEST_CASE("property: dyadic squares have exact square roots") {
  Rng rng(3);
  NonnegativeReals alg;
  for (int t = 0; t < 200; ++t) {
    const Param x = alg.sample_dyadic_square(rng);
    const Param r = alg.sqrt_select(x);
    CHECK(alg.mul(r, r)(0) == x(0));
    const Param y = alg.sample_dyadic_square(rng);
    CHECK(alg.sqrt_select(alg.mul(x, y))(0) == alg.mul(r, alg.sqrt_select(y))(0));
  }
}

TEST_CASE("tuple powers act by diagonal blocks") {
  Rng rng(4);
  auto base = std::make_shared<ComplexScalars>();
  auto alg = tuple_power(base, 3);
  CHECK(alg->degree() == 3);
  CHECK(alg->coord_count() == 3);
  CHECK(alg->kind() == "tuple_power");
  auto space = FieldSpace::euclidean(6, ScalarKind::kComplex);
  check_laws(*alg, space, rng, 100, [&](Rng& r) { return random_operator(r, space); });
  Param e(3);
  e << 1.0, 2.0, 3.0;
  const Operator out = alg->act(e, Operator::identity(space));
  Vector expect(6);
  expect << 1.0, 1.0, 2.0, 2.0, 3.0, 3.0;
  CHECK((out.matrix().diagonal() - expect).norm() == 0.0);
  CHECK_ERROR_CODE(alg->act(e, Operator::identity(FieldSpace::euclidean(2))), ErrorCode::kBadSpec);

  auto mixed = std::make_shared<ProductAlgebra>(
      std::vector<AlgebraPtr>{base, std::make_shared<NonnegativeReals>()});
  CHECK(mixed->kind() == "product");
  Param bad(2);
  bad << 1.0, -1.0;
  CHECK_FALSE(mixed->contains(bad));
  CHECK_ERROR_CODE(mixed->sqrt_select(bad), ErrorCode::kNoSquareRoot);
}

TEST_CASE("centralizer diagonal of an idempotent") {
  Rng rng(5);
  auto space = FieldSpace::euclidean(4);
  Matrix p = Matrix::Zero(4, 4);
  p(0, 0) = p(0, 1) = p(1, 0) = p(1, 1) = 0.5;
  p(2, 2) = 1.0;
  CentralizerDiagonal alg(Operator(space, p), 1);
  CHECK(alg.classes() == std::vector<int>{0, 0, 1, 2});
  CHECK(alg.basis().size() == 3);
  check_laws(alg, space, rng, 100, [&](Rng& r) { return random_operator(r, space); });
  for (int t = 0; t < 20; ++t) {
    const Param d = alg.sample(rng);
    const Operator dp = alg.act(d, alg.idempotent());
    const Operator pd = compose(alg.idempotent(), alg.act(d, Operator::identity(space)));
    CHECK(frobenius_distance(dp, pd) < 1e-12);
  }
  Param split(4);
  split << 1.0, 2.0, 1.0, 1.0;
  CHECK_FALSE(alg.contains(split));
  Matrix notidem = Matrix::Identity(4, 4) * 2.0;
  CHECK_ERROR_CODE(CentralizerDiagonal(Operator(space, notidem), 1), ErrorCode::kBadSpec);
}

TEST_CASE("boolean carrier: idempotents are their own square roots") {
  Rng rng(6);
  BooleanComplex alg(3);
  auto space = FieldSpace::euclidean(6, ScalarKind::kComplex);
  check_laws(alg, space, rng, 100, [&](Rng& r) { return random_diagonal(r, space); });
  for (int t = 0; t < 50; ++t) {
    const Param e = alg.sample_idempotent(rng);
    CHECK(alg.sqrt_select(e) == e);
    CHECK(alg.mul(e, e) == e);
  }
}

TEST_CASE("boolean action compatibility depends on the operator") {
  Rng rng(7);
  BooleanComplex alg(2);
  auto space = FieldSpace::euclidean(4, ScalarKind::kComplex);
  std::vector<ActionSample> diag_samples, dense_samples;
  for (int t = 0; t < 10; ++t) {
    diag_samples.push_back({alg.sample(rng), alg.sample(rng), random_diagonal(rng, space), random_diagonal(rng, space)});
    dense_samples.push_back({alg.sample(rng), alg.sample(rng), random_operator(rng, space), random_operator(rng, space)});
  }
  const auto good = check_action_compatibility(alg, diag_samples, 1e-12);
  CHECK(good.left_composition_holds == true);
  CHECK(good.product_holds == true);
  CHECK(good.right_composition_holds == true);
  const auto bad = check_action_compatibility(alg, dense_samples, 1e-12);
  CHECK(bad.left_composition_holds == true);
  CHECK(bad.product_holds == true);
  CHECK(bad.right_composition_holds == false);
  const auto empty = check_action_compatibility(alg, {}, 1e-12);
  CHECK_FALSE(empty.left_composition_holds.has_value());
}

TEST_CASE("circulant algebra acts through Fourier symbols") {
  Rng rng(8);
  auto space = grid_space(4);
  CirculantAlgebra alg(space);
  check_laws(alg, space, rng, 100, [&](Rng& r) { return random_circulant(r, space); });
  const Param sym = alg.sample(rng);
  const Operator c = alg.operator_of(sym);
  CHECK((fourier_symbol(c) - sym).norm() < 1e-12);
  CHECK(commutes_with_shifts(c, 1e-12));
  const Param back = solve_action_on_identity(alg, c);
  CHECK(dist(back, sym) < 1e-10);
}

TEST_CASE("identity-orbit solve") {
  auto space = FieldSpace::euclidean(3, ScalarKind::kComplex);
  ComplexScalars alg;
  const Operator a = scale(Scalar(2.0, -1.0), Operator::identity(space));
  CHECK(std::abs(solve_action_on_identity(alg, a)(0) - Scalar(2.0, -1.0)) < 1e-12);
  Matrix p = Matrix::Zero(3, 3);
  p(0, 0) = 1.0;
  try {
    solve_action_on_identity(alg, Operator(space, p));
    FAIL("expected NotInIdentityOrbit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotInIdentityOrbit);
    REQUIRE(e.residual.has_value());
    CHECK(*e.residual > 0.1);
  }
  NonnegativeReals cone;
  CHECK_ERROR_CODE(solve_action_on_identity(cone, scale(-1.0, Operator::identity(space))),
                   ErrorCode::kNotInIdentityOrbit);
}

TEST_CASE("coefficient preimages") {
  const auto lin = CoefficientFunction::linear(2.0);
  CHECK(lin.preimage_scalar(3.0) == Scalar(1.5));
  CHECK(lin.preimage_scalar(0.0) == Scalar(0.0));
  const auto aff = CoefficientFunction::affine(2.0, 1.0);
  CHECK(std::abs(aff.eval_scalar(aff.preimage_scalar(Scalar(4.0, 1.0))) - Scalar(4.0, 1.0)) < 1e-14);

  const auto ex = CoefficientFunction::exp(1.0, 1.0, CoefficientDomain::kReal);
  const Scalar d = ex.preimage_scalar(2.0);
  CHECK(d.imag() == 0.0);
  CHECK(std::abs(ex.eval_scalar(d) - 2.0) <= 1e-12);
  CHECK(std::abs(d.real() - std::log(2.0)) < 1e-14);
  CHECK_ERROR_CODE(ex.preimage_scalar(-1.0), ErrorCode::kNoPreimage);
  CHECK_ERROR_CODE(ex.preimage_scalar(0.0), ErrorCode::kNoPreimage);
  const auto exc = CoefficientFunction::exp(1.0, 1.0);
  CHECK(std::abs(exc.eval_scalar(exc.preimage_scalar(-1.0)) + 1.0) < 1e-14);

  const auto sq = CoefficientFunction::power(1.0, 2.0, CoefficientDomain::kReal);
  CHECK(sq.preimage_scalar(9.0) == Scalar(3.0));
  CHECK_ERROR_CODE(sq.preimage_scalar(-9.0), ErrorCode::kNoPreimage);
  const auto cube = CoefficientFunction::power(1.0, 3.0, CoefficientDomain::kReal);
  CHECK(std::abs(cube.preimage_scalar(-8.0) + 2.0) < 1e-14);

  const auto nonneg = CoefficientFunction::linear(1.0, CoefficientDomain::kNonnegative);
  CHECK_ERROR_CODE(nonneg.preimage_scalar(-1.0), ErrorCode::kNoPreimage);

  const auto k = CoefficientFunction::constant(3.0);
  CHECK(k.preimage_scalar(3.0) == Scalar(0.0));
  CHECK_ERROR_CODE(k.preimage_scalar(2.0), ErrorCode::kNoPreimage);
  CHECK_ERROR_CODE(CoefficientFunction::linear(0.0).preimage_scalar(1.0), ErrorCode::kNoPreimage);
  CHECK_FALSE(CoefficientFunction::linear(0.0).nowhere_vanishing());

  NonnegativeReals cone;
  CHECK_ERROR_CODE(coefficient_preimage(CoefficientFunction::linear(1.0), cone, Param::Constant(1, -2.0)),
                   ErrorCode::kNoPreimage);
}

TEST_CASE("property: preimage inverts eval") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.3, 2.5);
  for (int t = 0; t < 200; ++t) {
    const Scalar a(u(rng), u(rng) - 1.0), b(u(rng), 0.0);
    const Scalar x(u(rng), 0.0);
    for (const auto& f : {CoefficientFunction::linear(a), CoefficientFunction::affine(a, b),
                          CoefficientFunction::exp(b, b, CoefficientDomain::kReal),
                          CoefficientFunction::power(b, 2.0, CoefficientDomain::kNonnegative)}) {
      const Scalar c = f.eval_scalar(x);
      const Scalar back = f.preimage_scalar(c);
      CHECK(std::abs(f.eval_scalar(back) - c) < 1e-12 * std::max(1.0, std::abs(c)));
      CHECK(std::abs(back - x) < 1e-10);
    }
  }
}

TEST_CASE("coefficient json round trip and schema errors") {
  for (const auto& f : {CoefficientFunction::linear(Scalar(1.0, -2.0)), CoefficientFunction::affine(2.0, 3.0),
                        CoefficientFunction::exp(1.0, 0.5, CoefficientDomain::kReal),
                        CoefficientFunction::power(2.0, 3.0, CoefficientDomain::kNonnegative),
                        CoefficientFunction::constant(-1.0),
                        CoefficientFunction::linear(1.0).with_nowhere_vanishing(false)}) {
    CHECK(CoefficientFunction::from_json(Json::parse(f.to_json().dump())) == f);
  }
  CHECK_ERROR_CODE(CoefficientFunction::from_json(Json::parse(R"({"form":"sin","a":1})")), ErrorCode::kSchemaError);
  CHECK_ERROR_CODE(CoefficientFunction::from_json(Json::parse(R"({"form":"linear"})")), ErrorCode::kSchemaError);
  CHECK_ERROR_CODE(CoefficientFunction::from_json(Json::parse(R"({"form":"exp","a":1,"b":0})")), ErrorCode::kBadSpec);
}

TEST_CASE("canonical calculus operator") {
  auto space = FieldSpace::euclidean(3);
  ComplexScalars alg;
  const Operator psi = canonical_calculus(CoefficientFunction::linear(2.0), alg, space);
  CHECK(frobenius_distance(psi, scale(0.5, Operator::identity(space))) < 1e-15);
  CHECK_ERROR_CODE(canonical_calculus(CoefficientFunction::affine(1.0, 1.0), alg, space), ErrorCode::kNotWellDefined);
  CHECK_ERROR_CODE(canonical_calculus(CoefficientFunction::constant(1.0), alg, space), ErrorCode::kNotWellDefined);
  CHECK_ERROR_CODE(canonical_calculus(CoefficientFunction::linear(0.0), alg, space), ErrorCode::kNotWellDefined);
}

TEST_CASE("functional calculus validation") {
  Rng rng(10);
  auto space = FieldSpace::euclidean(3, ScalarKind::kComplex);
  ComplexScalars alg;
  FunctionalCalculus fc;
  fc.entries.push_back({CoefficientFunction::linear(2.0), scale(0.5, Operator::identity(space))});
  fc.entries.push_back({CoefficientFunction::linear(Scalar(0.0, 1.0)), scale(Scalar(0.0, -1.0), Operator::identity(space))});
  std::vector<Param> eps;
  std::vector<Operator> psis;
  for (int t = 0; t < 5; ++t) {
    eps.push_back(alg.sample(rng));
    psis.push_back(random_operator(rng, space));
  }
  const auto ok = validate_functional_calculus(fc, alg, eps, psis, 1e-12);
  CHECK(ok.pass);
  CHECK(ok.samples == 50);
  CHECK_FALSE(ok.unital);

  FunctionalCalculus unital = fc;
  unital.entries.push_back({CoefficientFunction::constant(1.0), Operator::identity(space)});
  const auto u = validate_functional_calculus(unital, alg, eps, psis, 1e-12);
  CHECK(u.unital);
  CHECK_FALSE(u.pass);
  CHECK_FALSE(u.warning.empty());

  const auto empty = validate_functional_calculus(FunctionalCalculus{}, alg, eps, psis, 1e-12);
  CHECK(empty.pass);
  CHECK(empty.samples == 0);
}

TEST_CASE("degree embeddings and pullback") {
  Param e(2);
  e << 1.0, 2.0;
  const Param out = embed_parameters(e, 2, 4);
  CHECK(out.size() == 4);
  CHECK(out(1) == Scalar(2.0));
  CHECK(out(3) == Scalar(0.0));
  CHECK_ERROR_CODE(embed_parameters(e, 3, 2), ErrorCode::kDegreeMismatch);
  CHECK_ERROR_CODE(embed_parameters(e, 1, 3), ErrorCode::kDegreeMismatch);
  const ScalarMap f = [](const Param& x) { return x.sum() + x(x.size() - 1); };
  const ScalarMap g = pullback(f, 2, 3);
  CHECK(g(e) == Scalar(3.0));
  CHECK_ERROR_CODE(pullback(f, 4, 3), ErrorCode::kDegreeMismatch);
}

TEST_CASE("algebras parse from json") {
  auto space = grid_space(4);
  CHECK(algebra_from_json(Json::parse(R"({"kind":"complex_scalars"})"), space)->kind() == "complex_scalars");
  CHECK(algebra_from_json(Json::parse(R"({"kind":"boolean_complex","m":2})"), space)->coord_count() == 2);
  CHECK(algebra_from_json(Json::parse(R"({"kind":"circulant"})"), space)->coord_count() == 4);
  auto tp = algebra_from_json(Json::parse(R"({"kind":"tuple_power","base":{"kind":"nonnegative_reals"},"k":2})"), space);
  CHECK(tp->degree() == 2);
  CHECK(tp->real_carrier());
  CHECK_ERROR_CODE(algebra_from_json(Json::parse(R"({"kind":"quaternion"})"), space), ErrorCode::kSchemaError);
  CHECK_ERROR_CODE(algebra_from_json(Json::parse(R"({"kind":"boolean_complex"})"), space), ErrorCode::kSchemaError);
}

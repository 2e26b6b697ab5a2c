#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "fairmi/data.hpp"
#include "fairmi/errors.hpp"
#include "fairmi/infometrics.hpp"
#include "test_util.hpp"

using namespace fairmi;
using fairmi::test::random_classes;
using fairmi::test::random_matrix;

namespace {

const EstimatorBackend kLspcQuad = LspcBackend{BasisKind::FeatureCross, {}};
const EstimatorBackend kLspcLinear = LspcBackend{BasisKind::Identity, {}};

double normal_pdf(double x, double mu) {
  return std::exp(-0.5 * (x - mu) * (x - mu)) / std::sqrt(2 * std::numbers::pi);
}

// -int p(z) sum_a p(a|z) log p(a|z) dz for A ~ Bern(1/2), Z | A ~ N(+-mu, 1).
double true_cond_entropy(double mu) {
  const auto f = [mu](double z) {
    const double p0 = 0.5 * normal_pdf(z, -mu), p1 = 0.5 * normal_pdf(z, mu);
    const double pz = p0 + p1;
    double h = 0;
    for (const double pa : {p0 / pz, p1 / pz}) {
      if (pa > 0) h -= pa * std::log(pa);
    }
    return pz * h;
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 15,
      1e-12);
}

}  // namespace

TEST_CASE("entropy") {
  CHECK(entropy((ClassVector(4) << 0, 0, 1, 1).finished()) == doctest::Approx(std::log(2.0)));
  CHECK(entropy((ClassVector(4) << 0, 0, 0, 0).finished()) == 0.0);
  const double h31 = -0.75 * std::log(0.75) - 0.25 * std::log(0.25);
  CHECK(entropy((ClassVector(4) << 0, 1, 0, 0).finished()) == doctest::Approx(h31).epsilon(1e-15));
  CHECK(h31 == doctest::Approx(0.562335).epsilon(1e-6));
  CHECK(entropy((ClassVector(3) << 0, 2, 2).finished()) <= std::log(3.0));
  CHECK_THROWS(entropy(ClassVector(0)));
}

TEST_CASE("cond_entropy with an uninformative conditioner equals the entropy") {
  const ClassVector a = random_classes(5000, 2, 1);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Constant(5000, 1, 3.0);
  for (const auto& b : {kLspcQuad, kLspcLinear}) {
    CHECK(cond_entropy(a, z, b) == doctest::Approx(entropy(a)).epsilon(1e-3));
  }
}

TEST_CASE("cond_entropy with a fully informative conditioner is small") {
  const int k = 3;
  const ClassVector a = random_classes(20000, k, 2);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(a.size(), k);
  for (Eigen::Index i = 0; i < a.size(); ++i) z(i, a[i]) = 1.0;
  // The softplus floor leaves log(2)/beta on each wrong class, so the fitted
  // posterior on the true class saturates at sp(1) / (sp(1) + (k-1) sp(0)).
  const double sp1 = 1.0 + std::log1p(std::exp(-10.0)) / 10.0, sp0 = std::log(2.0) / 10.0;
  const double expect = -std::log(sp1 / (sp1 + (k - 1) * sp0));
  CHECK(cond_entropy(a, z, kLspcQuad) == doctest::Approx(expect).epsilon(0.01));
  CHECK(cond_entropy(a, z, EstimatorBackend{LogisticQuadBackend{}}) < 0.05);
}

TEST_CASE("cond_entropy against the quadrature oracle") {
  const double truth = true_cond_entropy(1.0);
  CHECK(truth == doctest::Approx(0.35632).epsilon(1e-4));
  Scenario sc;
  sc.mean0 << 0.0, -1.0;
  sc.mean1 << 0.0, 1.0;
  const auto smp = sample_scenario(sc, 100000, 5);
  CHECK(std::abs(cond_entropy(smp.a, smp.s, EstimatorBackend{LogisticQuadBackend{}}) - truth) <
        0.03);
  // Least squares on a quadratic basis cannot follow the logistic tails.
  CHECK(std::abs(cond_entropy(smp.a, smp.s, kLspcQuad) - truth) < 0.05);
}

TEST_CASE("estimate_nmi anchors") {
  const ClassVector a = random_classes(10000, 2, 3);
  const Eigen::VectorXd y = random_matrix(10000, 1, 4);
  SUBCASE("constant score") {
    const Eigen::VectorXd s = Eigen::VectorXd::Constant(10000, 0.25);
    CHECK(std::abs(estimate_nmi(Criterion::Independence, y, s, a, kLspcQuad).nmi) < 0.02);
  }
  SUBCASE("score equals the attribute") {
    const Eigen::VectorXd s = a.cast<double>();
    const MiEstimate est = estimate_nmi(Criterion::Independence, y, s, a, kLspcQuad);
    CHECK(est.nmi > 0.9);
    CHECK(est.nmi <= 1.05);
    CHECK(est.nmi == est.mi / est.normaliser);
    CHECK(est.estimator_id == "lspc-quad");
  }
}

TEST_CASE("estimate_nmi criteria use matching normalisers") {
  Scenario sc;
  sc.p = 0.4;
  sc.mean0 << 0.0, 0.0;
  sc.mean1 << 0.8, 0.6;
  sc.cov0 << 1.0, 0.6, 0.6, 1.0;
  sc.cov1 << 1.0, 0.3, 0.3, 1.2;
  const auto smp = sample_scenario(sc, 5000, 6);
  const auto shared = shared_log_posteriors(smp.y, smp.s, smp.a, kLspcQuad);
  const auto ind = nmi_from_shared(Criterion::Independence, shared, "x");
  const auto sep = nmi_from_shared(Criterion::Separation, shared, "x");
  const auto suf = nmi_from_shared(Criterion::Sufficiency, shared, "x");
  CHECK(ind.normaliser == doctest::Approx(entropy(smp.a)).epsilon(1e-12));
  CHECK(sep.normaliser == doctest::Approx(cond_entropy(smp.a, smp.y, kLspcQuad)).epsilon(1e-12));
  CHECK(suf.normaliser == doctest::Approx(cond_entropy(smp.a, smp.s, kLspcQuad)).epsilon(1e-12));
  // Per-row chain identity on shared posteriors:
  // log(q/r) = log(q/t) - log(r/t), with q = p(a|y,s), r = p(a|s), t = p(a|y).
  const Eigen::ArrayXd lhs = (shared.given_ys - shared.given_s).array();
  const Eigen::ArrayXd rhs =
      (shared.given_ys - shared.given_y).array() - (shared.given_s - shared.given_y).array();
  CHECK((lhs - rhs).abs().maxCoeff() < 1e-12);

  const auto all = estimate_all_nmi(smp.y, smp.s, smp.a, kLspcQuad);
  CHECK(all[0].nmi == ind.nmi);
  CHECK(all[1].nmi == sep.nmi);
  CHECK(all[2].nmi == suf.nmi);
  CHECK(estimate_nmi(Criterion::Separation, smp.y, smp.s, smp.a, kLspcQuad).nmi == sep.nmi);
}

TEST_CASE("normalisers are positive for non-degenerate data") {
  const ClassVector a = random_classes(2000, 3, 8);
  const Eigen::VectorXd y = random_matrix(2000, 1, 9);
  const Eigen::VectorXd s = random_matrix(2000, 1, 10);
  for (const auto& b : {kLspcQuad, kLspcLinear, EstimatorBackend{LogisticQuadBackend{}}}) {
    for (const auto c : kAllCriteria) CHECK(estimate_nmi(c, y, s, a, b).normaliser > 0.0);
  }
}

TEST_CASE("degenerate normaliser raises") {
  const Eigen::VectorXd y = random_matrix(1000, 1, 2);
  const Eigen::VectorXd s = random_matrix(1000, 1, 3);
  CHECK_THROWS_AS(estimate_nmi(Criterion::Independence, y, s, ClassVector::Zero(1000), kLspcQuad),
                  NormaliserDegenerate);
  // A determined by Y: log p(a|y) = 0 on every row.
  SharedLogPosteriors shared;
  shared.log_prior = Eigen::VectorXd::Constant(4, std::log(0.5));
  shared.given_y = Eigen::VectorXd::Zero(4);
  shared.given_s = Eigen::VectorXd::Constant(4, -0.3);
  shared.given_ys = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(nmi_from_shared(Criterion::Separation, shared, "x"), NormaliserDegenerate);
  CHECK_NOTHROW(nmi_from_shared(Criterion::Sufficiency, shared, "x"));
  const auto all = estimate_all_nmi(y, s, ClassVector::Zero(1000), kLspcQuad);
  CHECK(std::isnan(all[0].nmi));
}

TEST_CASE("posteriors are floored and rows sum to one") {
  const ClassVector a = random_classes(1000, 3, 4);
  const Eigen::MatrixXd z = 5 * random_matrix(1000, 2, 5);
  for (const auto& b : {kLspcQuad, EstimatorBackend{LrRksBackend{}}}) {
    const Eigen::MatrixXd p = fit_posteriors(b, z, a);
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(p.minCoeff() >= kEstimatorProbFloor / (1 + 3 * kEstimatorProbFloor) - 1e-18);
  }
}

TEST_CASE("posterior columns follow class labels, not first appearance") {
  ClassVector a(400);
  Eigen::VectorXd s(400);
  for (Eigen::Index i = 0; i < 400; ++i) {
    a[i] = (i % 2 == 0) ? 1 : 0;
    s[i] = a[i] == 1 ? 2.0 + 0.01 * i / 400 : -2.0 - 0.01 * i / 400;
  }
  for (const auto& b : {kLspcQuad, EstimatorBackend{LogisticQuadBackend{}}}) {
    const Eigen::MatrixXd p = fit_posteriors(b, s, a);
    CHECK(p(0, 1) > 0.9);
    CHECK(p(1, 0) > 0.9);
  }
}

TEST_CASE("absent classes get the floor") {
  ClassVector a(6);
  a << 0, 2, 0, 2, 0, 2;
  const Eigen::MatrixXd p = fit_posteriors(kLspcQuad, random_matrix(6, 1, 1), a);
  CHECK(p.cols() == 3);
  CHECK(p.col(1).maxCoeff() < 2e-6);
}

TEST_CASE("criterion and backend names round-trip") {
  for (const auto c : kAllCriteria) CHECK(parse_criterion(to_string(c)) == c);
  CHECK(parse_criterion("sep") == Criterion::Separation);
  CHECK_THROWS_AS(parse_criterion("fairness"), ConfigError);
  for (const std::string id : {"lspc-linear", "lspc-quad", "logistic-quad", "lr-rks"}) {
    CHECK(estimator_id(parse_backend(id)) == id);
  }
  CHECK_THROWS_AS(parse_backend("ksg"), ConfigError);
}

#include <doctest.h>

#include <Eigen/QR>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fairmi/data.hpp"
#include "fairmi/errors.hpp"
#include "fairmi/fairreg.hpp"
#include "test_util.hpp"

using namespace fairmi;
using fairmi::test::random_classes;
using fairmi::test::random_matrix;

namespace {

Dataset random_dataset(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Dataset ds;
  ds.features = random_matrix(n, p, seed);
  const Eigen::VectorXd w = random_matrix(p, 1, seed + 1);
  ds.target = ds.features * w + 0.3 * random_matrix(n, 1, seed + 2);
  ds.sensitive = random_classes(n, 2, seed + 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.sensitive[i] == 1) ds.target[i] += 0.5;
  }
  for (Eigen::Index j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.class_labels = {"0", "1"};
  ds.standardisation = Standardisation::identity(p);
  return ds;
}

TrainingConfig config_for(const std::string& reg, double lambda_f, double lambda_w = 0.01) {
  TrainingConfig c;
  c.regulariser = parse_regulariser(reg);
  c.lambda_f = lambda_f;
  c.lambda_w = lambda_w;
  return c;
}

}  // namespace

TEST_CASE("predict") {
  const Eigen::MatrixXd x = random_matrix(5, 3, 1);
  CHECK(predict_scores(Eigen::VectorXd::Zero(4), x).isZero());
  Eigen::VectorXd theta(4);
  theta << 1, 0, 0, 2;
  CHECK((predict_scores(theta, x) - (x.col(0).array() + 2).matrix()).norm() < 1e-15);
  CHECK_THROWS_AS(predict_scores(Eigen::VectorXd::Zero(3), x), DimensionError);
}

TEST_CASE("lambda_f = 0 training matches closed-form ridge") {
  const Dataset ds = random_dataset(300, 5, 2);
  const TrainingConfig cfg = config_for("none", 0.0, 0.05);
  const Eigen::VectorXd ridge = ridge_solution(ds.features, ds.target, 0.05);
  TrainingConfig random_start = cfg;
  random_start.init = InitKind::Random;
  random_start.init_seed = 4;
  const TrainedModel m = train(ds, random_start);
  CHECK((m.theta - ridge).lpNorm<Eigen::Infinity>() < 1e-5);
  CHECK((predict(m, ds.features) - predict_scores(ridge, ds.features)).lpNorm<Eigen::Infinity>() <
        1e-6);
  CHECK(m.converged);
}

TEST_CASE("ridge solution oracle") {
  // Augmented least squares with an unpenalised intercept, solved by QR.
  const Dataset ds = random_dataset(100, 4, 5);
  const double lw = 0.2;
  const Eigen::Index n = ds.n(), p = ds.p();
  Eigen::MatrixXd aug(n + p, p + 1);
  aug.topRows(n) << ds.features, Eigen::VectorXd::Ones(n);
  aug.bottomRows(p) << std::sqrt(n * lw) * Eigen::MatrixXd::Identity(p, p), Eigen::VectorXd::Zero(p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p);
  rhs.head(n) = ds.target;
  const Eigen::VectorXd expect = aug.colPivHouseholderQr().solve(rhs);
  CHECK((ridge_solution(ds.features, ds.target, lw) - expect).norm() < 1e-10);
}

TEST_CASE("total_loss pieces") {
  Dataset ds = random_dataset(200, 3, 6);
  const Eigen::VectorXd theta = random_matrix(4, 1, 7);
  SUBCASE("lambda_f = 0 is the ridge objective") {
    const TrainingConfig cfg = config_for("lspc-ind-quad", 0.0, 0.3);
    const Eigen::VectorXd r = ds.target - predict_scores(theta, ds.features);
    const double ridge = r.squaredNorm() / ds.n() + 0.3 * theta.head(3).squaredNorm();
    CHECK(total_loss(theta, ds, cfg) == doctest::Approx(ridge).epsilon(1e-14));
  }
  SUBCASE("zero predictor on standardised target") {
    ds.target = (ds.target.array() - ds.target.mean()) /
                std::sqrt((ds.target.array() - ds.target.mean()).square().mean());
    CHECK(total_loss(Eigen::VectorXd::Zero(4), ds, config_for("none", 0.0)) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("linear in lambda_f") {
    for (const std::string reg : {"lspc-ind-quad", "lspc-sep-linear", "berk-group"}) {
      const double l1 = total_loss(theta, ds, config_for(reg, 1.0));
      const double l2 = total_loss(theta, ds, config_for(reg, 2.0));
      const Eigen::VectorXd s = predict_scores(theta, ds.features);
      const double pen =
          fairness_penalty(config_for(reg, 1.0).regulariser, ds.target, s, ds.sensitive, 2, false,
                           nullptr)
              .value;
      CHECK(l2 - l1 == doctest::Approx(pen).epsilon(1e-10));
    }
  }
  SUBCASE("intercept is not penalised") {
    Eigen::VectorXd t2 = theta;
    t2[3] += 1.0;
    const TrainingConfig a = config_for("none", 0.0, 0.0), b = config_for("none", 0.0, 5.0);
    CHECK(total_loss(t2, ds, b) - total_loss(t2, ds, a) ==
          doctest::Approx(total_loss(theta, ds, b) - total_loss(theta, ds, a)));
  }
}

TEST_CASE("entropic penalty anchors") {
  const Eigen::Index n = 10000;
  ClassVector a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = static_cast<int>(i % 2);
  const Eigen::VectorXd y = random_matrix(n, 1, 1);
  const Regulariser reg = parse_regulariser("lspc-ind-quad");
  SUBCASE("constant score predicts priors") {
    const auto pv = fairness_penalty(reg, y, Eigen::VectorXd::Constant(n, 1.5), a, 2, false, nullptr);
    CHECK(pv.value == doctest::Approx(std::log(0.5)).epsilon(1e-3));
  }
  SUBCASE("score equals the attribute") {
    const auto pv = fairness_penalty(reg, y, a.cast<double>(), a, 2, false, nullptr);
    CHECK(pv.value > std::log(0.9));
    CHECK(pv.value <= 1e-5);
  }
}

TEST_CASE("sufficiency identity on shared classifiers") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::Index n = 150;
    const Eigen::VectorXd y = random_matrix(n, 1, seed);
    const Eigen::VectorXd s = y + random_matrix(n, 1, seed + 10);
    const ClassVector a = random_classes(n, 2, seed + 20);
    for (const auto basis : {BasisKind::Identity, BasisKind::FeatureCross}) {
      const LspcEntropic suf{Criterion::Sufficiency, basis, {}};
      const auto terms = lspc_entropic_terms(suf, y, s, a, 2);
      const double l_suf = fairness_penalty(suf, y, s, a, 2, false, nullptr).value;
      CHECK(std::abs(l_suf - (terms.l_sep - terms.l_ind)) <= 1e-12);
    }
  }
}

TEST_CASE("Berk penalties") {
  SUBCASE("identical cross-pair scores give zero") {
    const Eigen::VectorXd y = random_matrix(20, 1, 1);
    const Eigen::VectorXd s = Eigen::VectorXd::Constant(20, 0.7);
    const ClassVector a = random_classes(20, 2, 2);
    CHECK(berk_penalty(BerkKind::Group, y, s, a, 1.0) == 0.0);
    CHECK(berk_penalty(BerkKind::Individual, y, s, a, 1.0) == 0.0);
  }
  SUBCASE("group errors cancel, individual errors do not") {
    Eigen::VectorXd y(4), s(4);
    ClassVector a(4);
    y << 0, 0, 0, 0;
    a << 0, 0, 1, 1;
    s << 1, -1, 0, 0;
    CHECK(berk_penalty(BerkKind::Group, y, s, a, 1.0) == doctest::Approx(0.0));
    CHECK(berk_penalty(BerkKind::Individual, y, s, a, 1.0) > 0.1);
  }
  SUBCASE("hand-computed two-pair value") {
    Eigen::VectorXd y(3), s(3);
    ClassVector a(3);
    y << 0, 1, 2;
    s << 1, 0, 3;
    a << 0, 1, 1;
    const double d1 = std::exp(-1.0 / 2), d2 = std::exp(-4.0 / 2);
    CHECK(berk_penalty(BerkKind::Individual, y, s, a, 1.0) ==
          doctest::Approx((d1 * 1 + d2 * 4) / 2));
    CHECK(berk_penalty(BerkKind::Group, y, s, a, 1.0) ==
          doctest::Approx(std::pow((d1 * 1 + d2 * -2) / 2, 2)));
  }
  SUBCASE("errors") {
    const Eigen::VectorXd v = random_matrix(4, 1, 1);
    CHECK_THROWS_AS(berk_penalty(BerkKind::Group, v, v, ClassVector::Zero(4), 1.0), DataError);
    ClassVector three(4);
    three << 0, 1, 2, 1;
    CHECK_THROWS_AS(berk_penalty(BerkKind::Group, v, v, three, 1.0), DataError);
  }
  SUBCASE("non-negative") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Eigen::VectorXd y = random_matrix(30, 1, seed), s = random_matrix(30, 1, seed + 50);
      const ClassVector a = random_classes(30, 2, seed);
      CHECK(berk_penalty(BerkKind::Group, y, s, a, 0.0) >= 0.0);
      CHECK(berk_penalty(BerkKind::Individual, y, s, a, 0.0) >= 0.0);
    }
  }
}

TEST_CASE("Berk cost grows with the pair count") {
  const auto time_of = [](Eigen::Index n) {
    const Eigen::VectorXd y = random_matrix(n, 1, 1), s = random_matrix(n, 1, 2);
    const ClassVector a = random_classes(n, 2, 3);
    double best = 1e9;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile double sink = 0;
      for (int r = 0; r < 5; ++r) {
        sink = sink + berk_penalty_with_gradient(BerkKind::Individual, y, s, a, 1.0, true).value;
      }
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  // Larger sizes than the 100/200 pair so timer resolution does not dominate.
  const double ratio = time_of(1600) / time_of(800);
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("loss_gradient matches central differences for every regulariser") {
  const std::vector<std::string> regs = {
      "none",          "berk-group",    "berk-individual", "lspc-ind-linear", "lspc-ind-quad",
      "lspc-sep-linear", "lspc-sep-quad", "lspc-suf-linear", "lspc-suf-quad",  "lr-ind-quad",
      "lr-sep-quad",   "lr-suf-quad"};
  for (const auto& reg : regs) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Dataset ds = random_dataset(200, 5, 100 + seed);
      TrainingConfig cfg = config_for(reg, 1.5, 0.02);
      if (auto* l = std::get_if<LogisticEntropic>(&cfg.regulariser)) l->params.grad_tol = 1e-12;
      const Eigen::VectorXd theta = 0.5 * random_matrix(6, 1, 200 + seed);
      const Eigen::VectorXd g = loss_gradient(theta, ds, cfg);
      const Eigen::VectorXd fd = fairmi::test::central_difference(
          [&](const Eigen::VectorXd& t) { return total_loss(t, ds, cfg); }, theta, 1e-5);
      CAPTURE(reg);
      CAPTURE(seed);
      CHECK(fairmi::test::rel_inf_error(g, fd) < 1e-5);
    }
  }
}

TEST_CASE("training trace is non-increasing") {
  const Dataset ds = random_dataset(300, 4, 9);
  TrainingConfig cfg = config_for("lspc-ind-quad", 2.0);
  const TrainedModel m = train(ds, cfg);
  REQUIRE(!m.train_loss_trace.empty());
  for (std::size_t i = 1; i < m.train_loss_trace.size(); ++i) {
    CHECK(m.train_loss_trace[i] <= m.train_loss_trace[i - 1] + 1e-12);
  }
  CHECK(m.theta.allFinite());
  CHECK(total_loss(m.theta, ds, cfg) <= total_loss(ridge_solution(ds.features, ds.target, 0.01), ds, cfg));
}

TEST_CASE("multi-start keeps the best start") {
  const Dataset ds = random_dataset(200, 3, 10);
  TrainingConfig one = config_for("lspc-sep-quad", 5.0);
  TrainingConfig many = one;
  many.n_starts = 4;
  const double l1 = total_loss(train(ds, one).theta, ds, one);
  const double l4 = total_loss(train(ds, many).theta, ds, many);
  CHECK(l4 <= l1 + 1e-12);
}

TEST_CASE("large fairness weight drives training NMI toward zero") {
  const Dataset ds = make_biased_regression(2000, {}, 3);
  const TrainedModel m = train(ds, config_for("lspc-ind-quad", 1e3));
  const Eigen::VectorXd s = predict(m, ds.features);
  const auto est = estimate_nmi(Criterion::Independence, ds.target, s, ds.sensitive,
                                LspcBackend{BasisKind::FeatureCross, {}});
  CHECK(est.nmi < 0.05);
}

TEST_CASE("r_squared") {
  const Eigen::VectorXd y = random_matrix(50, 1, 1);
  CHECK(r_squared(y, y) == 1.0);
  CHECK(r_squared(y, Eigen::VectorXd::Constant(50, y.mean())) == doctest::Approx(0.0));
  CHECK(r_squared(y, Eigen::VectorXd::Constant(50, 3.0)) <= 0.0);
}

TEST_CASE("evaluate_fold") {
  SUBCASE("realisable target") {
    Dataset ds = random_dataset(400, 3, 11);
    ds.target = ds.features * Eigen::Vector3d(1, -2, 0.5) + 1e-3 * random_matrix(400, 1, 1);
    const FrontierPoint pt =
        evaluate_fold(ds, kfold(ds.n(), 5, 0), 2, config_for("none", 0.0, 0.0), LrRksBackend{});
    CHECK(pt.r2 > 0.99);
    CHECK(pt.fold == 2);
    CHECK(pt.estimator_id == "lr-rks");
  }
  SUBCASE("evaluation backend must be independent") {
    const Dataset ds = random_dataset(100, 2, 12);
    const auto folds = kfold(ds.n(), 5, 0);
    CHECK_THROWS_AS(evaluate_fold(ds, folds, 0, config_for("lspc-ind-quad", 1.0),
                                  LspcBackend{BasisKind::FeatureCross, {}}),
                    ConfigError);
    CHECK_THROWS_AS(evaluate_fold(ds, folds, 0, config_for("lr-ind-quad", 1.0), LogisticQuadBackend{}),
                    ConfigError);
    const FrontierPoint pt = evaluate_fold(ds, folds, 0, config_for("lspc-ind-quad", 1.0),
                                           LspcBackend{BasisKind::Identity, {}});
    CHECK(pt.estimator_id != regulariser_backend_id(config_for("lspc-ind-quad", 1.0).regulariser));
    CHECK_THROWS_AS(evaluate_fold(ds, folds, 5, config_for("none", 0.0), LrRksBackend{}), ConfigError);
  }
}

TEST_CASE("regulariser ids round-trip") {
  for (const std::string id : {"none", "berk-group", "berk-individual", "lspc-ind-linear",
                               "lspc-sep-quad", "lspc-suf-quad", "lr-ind-quad", "lr-sep-quad"}) {
    CHECK(regulariser_id(parse_regulariser(id)) == id);
  }
  CHECK(regulariser_id(parse_regulariser("lspc-ind")) == "lspc-ind-quad");
  CHECK_THROWS_AS(parse_regulariser("lr-ind-linear"), ConfigError);
  CHECK_THROWS_AS(parse_regulariser("cvx"), ConfigError);
}

TEST_CASE("config validation") {
  TrainingConfig c;
  c.lambda_f = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.lambda_f = 0;
  c.optimiser.max_iter = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.optimiser.max_iter = 10;
  c.lambda_w = std::nan("");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("warm-started nested logistic reaches the cold-start optimum") {
  const Dataset ds = random_dataset(300, 3, 21);
  TrainingConfig cold = config_for("lr-ind-quad", 5.0);
  TrainingConfig warm = cold;
  std::get<LogisticEntropic>(warm.regulariser).warm_start = true;
  const TrainedModel a = train(ds, cold), b = train(ds, warm);
  CHECK(a.converged);
  CHECK(b.converged);
  CHECK((a.theta - b.theta).lpNorm<Eigen::Infinity>() < 1e-4);
}

#include "fairmi/fairreg.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "fairmi/errors.hpp"

namespace fairmi {

// ---------------------------------------------------------------------------
// Regulariser ids

namespace {

std::string criterion_tag(Criterion c) {
  switch (c) {
    case Criterion::Independence: return "ind";
    case Criterion::Separation: return "sep";
    case Criterion::Sufficiency: return "suf";
  }
  return "?";
}

}  // namespace

std::string regulariser_id(const Regulariser& r) {
  struct Visitor {
    std::string operator()(const NoRegulariser&) const { return "none"; }
    std::string operator()(const LspcEntropic& e) const {
      return "lspc-" + criterion_tag(e.criterion) + "-" + to_string(e.basis);
    }
    std::string operator()(const LogisticEntropic& e) const {
      return "lr-" + criterion_tag(e.criterion) + "-quad";
    }
    std::string operator()(const BerkGroup&) const { return "berk-group"; }
    std::string operator()(const BerkIndividual&) const { return "berk-individual"; }
  };
  return std::visit(Visitor{}, r);
}

Regulariser parse_regulariser(const std::string& id) {
  if (id == "none") return NoRegulariser{};
  if (id == "berk-group") return BerkGroup{};
  if (id == "berk-individual") return BerkIndividual{};
  // <family>-<criterion>[-<basis>]
  const auto first = id.find('-');
  const auto second = first == std::string::npos ? std::string::npos : id.find('-', first + 1);
  if (first != std::string::npos) {
    const std::string family = id.substr(0, first);
    const std::string crit = id.substr(first + 1, second == std::string::npos
                                                      ? std::string::npos
                                                      : second - first - 1);
    const std::string basis = second == std::string::npos ? "quad" : id.substr(second + 1);
    const Criterion c = parse_criterion(crit);
    if (family == "lspc" && (basis == "quad" || basis == "linear")) {
      return LspcEntropic{c, basis == "quad" ? BasisKind::FeatureCross : BasisKind::Identity, {}};
    }
    if (family == "lr" && basis == "quad") return LogisticEntropic{c, {}};
  }
  throw ConfigError("unknown regulariser '" + id + "'");
}

std::string regulariser_backend_id(const Regulariser& r) {
  if (const auto* e = std::get_if<LspcEntropic>(&r)) return "lspc-" + to_string(e->basis);
  if (std::holds_alternative<LogisticEntropic>(r)) return "logistic-quad";
  return {};
}

// ---------------------------------------------------------------------------
// Pairwise baselines

PenaltyValue berk_penalty_with_gradient(BerkKind kind, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& s, const ClassVector& a,
                                        double bandwidth, bool with_gradient) {
  const Eigen::Index n = a.size();
  if (y.size() != n || s.size() != n) throw DimensionError("berk_penalty: length mismatch");
  std::vector<Eigen::Index> g0;
  std::vector<Eigen::Index> g1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a[i] == 0) {
      g0.push_back(i);
    } else if (a[i] == 1) {
      g1.push_back(i);
    } else {
      throw DataError("berk_penalty: requires exactly two classes");
    }
  }
  if (g0.empty() || g1.empty()) throw DataError("berk_penalty: a class is empty");
  if (bandwidth <= 0.0) {
    const double mean = y.mean();
    bandwidth = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(n));
    if (!(bandwidth > 0.0)) bandwidth = 1.0;
  }
  const double inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  const double c = 1.0 / (static_cast<double>(g0.size()) * static_cast<double>(g1.size()));

  PenaltyValue out;
  if (with_gradient) out.grad_s = Eigen::VectorXd::Zero(n);
  if (kind == BerkKind::Individual) {
    double total = 0.0;
    for (const Eigen::Index i : g0) {
      double gi = 0.0;
      for (const Eigen::Index j : g1) {
        const double dy = y[i] - y[j];
        const double d = std::exp(-dy * dy * inv_2h2);
        const double ds = s[i] - s[j];
        total += d * ds * ds;
        if (with_gradient) {
          gi += d * ds;
          out.grad_s[j] -= 2.0 * c * d * ds;
        }
      }
      if (with_gradient) out.grad_s[i] += 2.0 * c * gi;
    }
    out.value = c * total;
    return out;
  }

  double m = 0.0;
  Eigen::VectorXd row_w;
  if (with_gradient) row_w = Eigen::VectorXd::Zero(n);
  for (const Eigen::Index i : g0) {
    for (const Eigen::Index j : g1) {
      const double dy = y[i] - y[j];
      const double d = std::exp(-dy * dy * inv_2h2);
      m += d * (s[i] - s[j]);
      if (with_gradient) {
        row_w[i] += d;
        row_w[j] -= d;
      }
    }
  }
  m *= c;
  out.value = m * m;
  if (with_gradient) out.grad_s = 2.0 * m * c * row_w;
  return out;
}

double berk_penalty(BerkKind kind, const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                    const ClassVector& a, double bandwidth) {
  return berk_penalty_with_gradient(kind, y, s, a, bandwidth, false).value;
}

// ---------------------------------------------------------------------------
// Entropic penalties

namespace {

Eigen::MatrixXd z_ind(const Eigen::VectorXd& s) {
  Eigen::MatrixXd z(s.size(), 2);
  z.col(0).setOnes();
  z.col(1) = s;
  return z;
}

Eigen::MatrixXd z_sep(const Eigen::VectorXd& y, const Eigen::VectorXd& s) {
  Eigen::MatrixXd z(s.size(), 3);
  z.col(0).setOnes();
  z.col(1) = s;
  z.col(2) = y;
  return z;
}

struct Term {
  double value = 0.0;
  Eigen::VectorXd grad_s;
};

Term lspc_term(const LspcEntropic& reg, const Eigen::MatrixXd& z, const ClassVector& a, int k,
               bool with_gradient) {
  const BasisSpec basis{reg.basis, z.cols()};
  auto ll = lspc_log_likelihood(basis, z, a, k, reg.params, with_gradient);
  Term t{ll.value, {}};
  if (with_gradient) t.grad_s = ll.grad_z.col(1);
  return t;
}

Term logistic_term(const LogisticEntropic& reg, const Eigen::MatrixXd& z, const ClassVector& a,
                   int k, bool with_gradient, std::optional<Eigen::MatrixXd>* warm) {
  const BasisSpec basis = BasisSpec::feature_cross(z.cols());
  const Eigen::MatrixXd* start = (warm != nullptr && warm->has_value()) ? &**warm : nullptr;
  auto ll = logistic_log_likelihood(basis, z, a, k, reg.params, with_gradient, start);
  if (warm != nullptr) *warm = std::move(ll.weights);
  Term t{ll.value, {}};
  if (with_gradient) t.grad_s = ll.grad_z.col(1);
  return t;
}

}  // namespace

EntropicTerms lspc_entropic_terms(const LspcEntropic& reg, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& s, const ClassVector& a, int k) {
  return {lspc_term(reg, z_ind(s), a, k, false).value, lspc_term(reg, z_sep(y, s), a, k, false).value};
}

PenaltyValue fairness_penalty(const Regulariser& reg, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& s, const ClassVector& a, int k,
                              bool with_gradient, PenaltyCache* cache) {
  if (y.size() != s.size() || a.size() != s.size()) {
    throw DimensionError("fairness_penalty: Y, S and A lengths differ");
  }
  PenaltyValue out;
  if (std::holds_alternative<NoRegulariser>(reg)) {
    if (with_gradient) out.grad_s = Eigen::VectorXd::Zero(s.size());
    return out;
  }
  if (const auto* b = std::get_if<BerkGroup>(&reg)) {
    return berk_penalty_with_gradient(BerkKind::Group, y, s, a, b->bandwidth, with_gradient);
  }
  if (const auto* b = std::get_if<BerkIndividual>(&reg)) {
    return berk_penalty_with_gradient(BerkKind::Individual, y, s, a, b->bandwidth, with_gradient);
  }

  Criterion criterion{};
  std::function<Term(const Eigen::MatrixXd&, bool sep)> term;
  if (const auto* e = std::get_if<LspcEntropic>(&reg)) {
    criterion = e->criterion;
    term = [&, e](const Eigen::MatrixXd& z, bool) { return lspc_term(*e, z, a, k, with_gradient); };
  } else {
    const auto* l = std::get_if<LogisticEntropic>(&reg);
    criterion = l->criterion;
    term = [&, e = l](const Eigen::MatrixXd& z, bool sep) {
      std::optional<Eigen::MatrixXd>* warm = nullptr;
      if (cache != nullptr && e->warm_start) warm = sep ? &cache->sep_weights : &cache->ind_weights;
      return logistic_term(*e, z, a, k, with_gradient, warm);
    };
  }

  switch (criterion) {
    case Criterion::Independence: {
      Term t = term(z_ind(s), false);
      out.value = t.value;
      out.grad_s = std::move(t.grad_s);
      break;
    }
    case Criterion::Separation: {
      Term t = term(z_sep(y, s), true);
      out.value = t.value;
      out.grad_s = std::move(t.grad_s);
      break;
    }
    case Criterion::Sufficiency: {
      const Term sep = term(z_sep(y, s), true);
      const Term ind = term(z_ind(s), false);
      out.value = sep.value - ind.value;
      if (with_gradient) out.grad_s = sep.grad_s - ind.grad_s;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objective

void TrainingConfig::validate() const {
  if (!(std::isfinite(lambda_w) && lambda_w >= 0.0)) throw ConfigError("lambda_w must be finite and >= 0");
  if (!(std::isfinite(lambda_f) && lambda_f >= 0.0)) throw ConfigError("lambda_f must be finite and >= 0");
  if (optimiser.max_iter < 1) throw ConfigError("optimiser.max_iter must be >= 1");
  if (optimiser.history_size < 1) throw ConfigError("optimiser.history_size must be >= 1");
  if (!(optimiser.grad_tol >= 0.0)) throw ConfigError("optimiser.grad_tol must be >= 0");
  if (n_starts < 1) throw ConfigError("n_starts must be >= 1");
  if (const auto* e = std::get_if<LspcEntropic>(&regulariser)) {
    if (!(e->params.beta > 0.0) || !(e->params.lambda_c >= 0.0) || !(e->params.prob_floor > 0.0)) {
      throw ConfigError("lspc regulariser: need beta > 0, lambda_c >= 0, prob_floor > 0");
    }
  }
}

Eigen::VectorXd predict_scores(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x) {
  if (theta.size() != x.cols() + 1) {
    throw DimensionError("predict: model has " + std::to_string(theta.size() - 1) +
                         " weights, input has " + std::to_string(x.cols()) + " features");
  }
  return (x * theta.head(x.cols())).array() + theta[x.cols()];
}

Eigen::VectorXd predict(const TrainedModel& model, const Eigen::MatrixXd& x) {
  return predict_scores(model.theta, x);
}

Eigen::VectorXd ridge_solution(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda_w) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc / static_cast<double>(n);
  gram.diagonal().array() += lambda_w;
  const Eigen::VectorXd rhs = xc.transpose() * (y.array() - y_mean).matrix() / static_cast<double>(n);
  Eigen::VectorXd theta(p + 1);
  theta.head(p) = gram.ldlt().solve(rhs);
  theta[p] = y_mean - x_mean.dot(theta.head(p));
  return theta;
}

FairObjective::FairObjective(const Dataset& ds, const TrainingConfig& config)
    : ds_(ds), config_(config) {}

double FairObjective::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
  return evaluate(theta, &grad);
}

double FairObjective::value(const Eigen::VectorXd& theta) { return evaluate(theta, nullptr); }

FairObjective::Terms FairObjective::terms(const Eigen::VectorXd& theta) {
  const Eigen::VectorXd s = predict_scores(theta, ds_.features);
  const Eigen::Index p = ds_.p();
  Terms t;
  t.fit = (ds_.target - s).squaredNorm() / static_cast<double>(ds_.n());
  t.ridge = config_.lambda_w * theta.head(p).squaredNorm();
  t.penalty = fairness_penalty(config_.regulariser, ds_.target, s, ds_.sensitive, ds_.k(), false,
                               &cache_)
                  .value;
  return t;
}

double FairObjective::evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
  const Eigen::Index p = ds_.p();
  const double n = static_cast<double>(ds_.n());
  const Eigen::VectorXd s = predict_scores(theta, ds_.features);
  const Eigen::VectorXd resid = s - ds_.target;
  double loss = resid.squaredNorm() / n + config_.lambda_w * theta.head(p).squaredNorm();
  const bool with_penalty =
      config_.lambda_f != 0.0 && !std::holds_alternative<NoRegulariser>(config_.regulariser);
  PenaltyValue pen;
  if (with_penalty) {
    pen = fairness_penalty(config_.regulariser, ds_.target, s, ds_.sensitive, ds_.k(),
                           grad != nullptr, &cache_);
    loss += config_.lambda_f * pen.value;
  }
  if (grad != nullptr) {
    Eigen::VectorXd ds = (2.0 / n) * resid;
    if (with_penalty) ds += config_.lambda_f * pen.grad_s;
    grad->resize(p + 1);
    grad->head(p) = ds_.features.transpose() * ds + 2.0 * config_.lambda_w * theta.head(p);
    (*grad)[p] = ds.sum();
  }
  return loss;
}

double total_loss(const Eigen::VectorXd& theta, const Dataset& ds, const TrainingConfig& config) {
  FairObjective obj(ds, config);
  return obj.value(theta);
}

Eigen::VectorXd loss_gradient(const Eigen::VectorXd& theta, const Dataset& ds,
                              const TrainingConfig& config) {
  FairObjective obj(ds, config);
  Eigen::VectorXd g;
  obj(theta, g);
  return g;
}

TrainedModel train(const Dataset& ds, const TrainingConfig& config) {
  config.validate();
  ds.validate();
  const Eigen::Index p = ds.p();

  Eigen::VectorXd theta0;
  switch (config.init) {
    case InitKind::Ridge: theta0 = ridge_solution(ds.features, ds.target, config.lambda_w); break;
    case InitKind::Zero: theta0 = Eigen::VectorXd::Zero(p + 1); break;
    case InitKind::Random: {
      std::mt19937_64 rng(config.init_seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      theta0.resize(p + 1);
      for (Eigen::Index j = 0; j <= p; ++j) theta0[j] = normal(rng);
      break;
    }
  }

  LbfgsOptions<double> opt;
  opt.max_iter = config.optimiser.max_iter;
  opt.grad_tol = config.optimiser.grad_tol;
  opt.history_size = config.optimiser.history_size;

  TrainedModel best;
  best.config = config;
  double best_f = std::numeric_limits<double>::infinity();
  for (int start = 0; start < config.n_starts; ++start) {
    Eigen::VectorXd x0 = theta0;
    if (start > 0) {
      std::mt19937_64 rng(config.init_seed + static_cast<std::uint64_t>(start));
      std::normal_distribution<double> normal(0.0, 0.1 * (1.0 + theta0.norm() / std::sqrt(double(p + 1))));
      for (Eigen::Index j = 0; j <= p; ++j) x0[j] += normal(rng);
    }
    FairObjective objective(ds, config);
    auto res = lbfgs_minimize<double>(objective, x0, opt);
    if (res.status == LbfgsStatus::NonFinite) {
      if (start == 0 && config.n_starts == 1) throw FitError("train: non-finite loss at the initial point");
      continue;
    }
    if (res.f < best_f) {
      best_f = res.f;
      best.theta = res.x;
      best.train_loss_trace = res.trace;
      best.status = res.status;
      best.converged = res.status == LbfgsStatus::Converged;
      best.iterations = res.iterations;
      best.evaluations = res.evaluations;
    }
  }
  if (best.theta.size() == 0) throw FitError("train: non-finite loss at every start");
  return best;
}

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size() || y.size() == 0) throw DimensionError("r_squared: length mismatch");
  const double ss_res = (y - yhat).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (ss_tot <= 0.0) return ss_res <= 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

FrontierPoint evaluate_fold(const Dataset& ds, const FoldAssignment& folds, int fold_id,
                            const TrainingConfig& config, const EstimatorBackend& eval_backend) {
  if (fold_id < 0 || fold_id >= folds.n_folds) throw ConfigError("evaluate_fold: fold out of range");
  if (folds.fold_of.size() != ds.n()) throw DimensionError("evaluate_fold: folds do not match dataset");
  const std::string eval_id = estimator_id(eval_backend);
  if (eval_id == regulariser_backend_id(config.regulariser)) {
    throw ConfigError("evaluate_fold: eval backend '" + eval_id +
                      "' is the regulariser's own classifier; use an independent estimator");
  }

  Dataset train_ds = ds.rows(folds.train_indices(fold_id));
  Dataset test_ds = ds.rows(folds.test_indices(fold_id));
  const Standardisation st = Standardisation::fit(train_ds.features);
  train_ds.features = st.apply(train_ds.features);
  test_ds.features = st.apply(test_ds.features);

  const auto t0 = std::chrono::steady_clock::now();
  const TrainedModel model = train(train_ds, config);
  const auto t1 = std::chrono::steady_clock::now();

  const Eigen::VectorXd s = predict(model, test_ds.features);
  FrontierPoint pt;
  pt.lambda_f = config.lambda_f;
  pt.fold = fold_id;
  pt.r2 = r_squared(test_ds.target, s);
  pt.train_seconds = std::chrono::duration<double>(t1 - t0).count();
  pt.estimator_id = eval_id;
  pt.regulariser_id = regulariser_id(config.regulariser);
  pt.converged = model.converged;
  const auto nmi = estimate_all_nmi(test_ds.target, s, test_ds.sensitive, eval_backend);
  pt.nmi_ind = nmi[0].nmi;
  pt.nmi_sep = nmi[1].nmi;
  pt.nmi_suf = nmi[2].nmi;
  return pt;
}

}  // namespace fairmi

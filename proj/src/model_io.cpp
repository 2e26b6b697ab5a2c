#include "fairmi/model_io.hpp"

#include <fstream>

#include "fairmi/errors.hpp"

namespace fairmi {
namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const char* init_name(InitKind k) {
  switch (k) {
    case InitKind::Ridge: return "ridge";
    case InitKind::Zero: return "zero";
    case InitKind::Random: return "random";
  }
  return "ridge";
}

}  // namespace

nlohmann::json to_json(const TrainingConfig& config) {
  nlohmann::json j;
  j["lambda_w"] = config.lambda_w;
  j["lambda_f"] = config.lambda_f;
  j["regulariser"] = regulariser_id(config.regulariser);
  nlohmann::json params = nlohmann::json::object();
  if (const auto* e = std::get_if<LspcEntropic>(&config.regulariser)) {
    params["lambda_c"] = e->params.lambda_c;
    params["beta"] = e->params.beta;
    params["prob_floor"] = e->params.prob_floor;
  } else if (const auto* l = std::get_if<LogisticEntropic>(&config.regulariser)) {
    params["lambda_c"] = l->params.lambda_c;
    params["warm_start"] = l->warm_start;
  } else if (const auto* g = std::get_if<BerkGroup>(&config.regulariser)) {
    params["bandwidth"] = g->bandwidth;
  } else if (const auto* i = std::get_if<BerkIndividual>(&config.regulariser)) {
    params["bandwidth"] = i->bandwidth;
  }
  j["regulariser_params"] = params;
  j["optimiser"] = {{"max_iter", config.optimiser.max_iter},
                    {"grad_tol", config.optimiser.grad_tol},
                    {"history_size", config.optimiser.history_size}};
  j["init"] = init_name(config.init);
  j["init_seed"] = config.init_seed;
  j["n_starts"] = config.n_starts;
  return j;
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  try {
    if (j.contains("lambda_w") && j["lambda_w"].is_number()) c.lambda_w = j["lambda_w"].get<double>();
    c.lambda_f = j.value("lambda_f", c.lambda_f);
    c.regulariser = parse_regulariser(j.value("regulariser", std::string("none")));
    if (j.contains("regulariser_params")) {
      const auto& p = j["regulariser_params"];
      if (auto* e = std::get_if<LspcEntropic>(&c.regulariser)) {
        e->params.lambda_c = p.value("lambda_c", e->params.lambda_c);
        e->params.beta = p.value("beta", e->params.beta);
        e->params.prob_floor = p.value("prob_floor", e->params.prob_floor);
      } else if (auto* l = std::get_if<LogisticEntropic>(&c.regulariser)) {
        l->params.lambda_c = p.value("lambda_c", l->params.lambda_c);
        l->warm_start = p.value("warm_start", l->warm_start);
      } else if (auto* g = std::get_if<BerkGroup>(&c.regulariser)) {
        g->bandwidth = p.value("bandwidth", g->bandwidth);
      } else if (auto* i = std::get_if<BerkIndividual>(&c.regulariser)) {
        i->bandwidth = p.value("bandwidth", i->bandwidth);
      }
    }
    if (j.contains("optimiser")) {
      const auto& o = j["optimiser"];
      c.optimiser.max_iter = o.value("max_iter", c.optimiser.max_iter);
      c.optimiser.grad_tol = o.value("grad_tol", c.optimiser.grad_tol);
      c.optimiser.history_size = o.value("history_size", c.optimiser.history_size);
    }
    const std::string init = j.value("init", std::string("ridge"));
    if (init == "ridge") {
      c.init = InitKind::Ridge;
    } else if (init == "zero") {
      c.init = InitKind::Zero;
    } else if (init == "random") {
      c.init = InitKind::Random;
    } else {
      throw ConfigError("unknown init '" + init + "'");
    }
    c.init_seed = j.value("init_seed", c.init_seed);
    c.n_starts = j.value("n_starts", c.n_starts);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model, const Dataset& ds) {
  nlohmann::json j;
  j["format"] = "fairmi-model";
  j["version"] = 1;
  j["theta"] = to_vec(model.theta);
  j["feature_names"] = ds.feature_names;
  j["standardisation"] = {{"mean", to_vec(ds.standardisation.mean)},
                          {"scale", to_vec(ds.standardisation.scale)}};
  j["config"] = to_json(model.config);
  j["converged"] = model.converged;
  std::ofstream out(path);
  if (!out) throw ConfigError("save_model: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_model: cannot open " + path.string());
  ModelFile m;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", std::string()) != "fairmi-model") {
      throw ConfigError("load_model: not a fairmi model file");
    }
    m.theta = from_vec(j.at("theta").get<std::vector<double>>());
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.standardisation.mean = from_vec(j.at("standardisation").at("mean").get<std::vector<double>>());
    m.standardisation.scale = from_vec(j.at("standardisation").at("scale").get<std::vector<double>>());
    m.config = j.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("load_model: ") + e.what());
  }
  const auto p = static_cast<Eigen::Index>(m.feature_names.size());
  if (m.theta.size() != p + 1 || m.standardisation.mean.size() != p ||
      m.standardisation.scale.size() != p) {
    throw ConfigError("load_model: inconsistent dimensions");
  }
  return m;
}

Eigen::VectorXd predict_csv(const ModelFile& model, const CsvTable& table) {
  std::vector<int> cols;
  for (const auto& name : model.feature_names) {
    const int c = table.column(name);
    if (c < 0) throw DataError("predict: input is missing feature column '" + name + "'");
    cols.push_back(c);
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      double v = 0.0;
      if (!parse_double(table.rows[i][cols[j]], v)) {
        throw DataError("predict: non-numeric value '" + table.rows[i][cols[j]] + "' in column '" +
                        model.feature_names[j] + "'");
      }
      x(i, static_cast<Eigen::Index>(j)) = v;
    }
  }
  return predict_scores(model.theta, model.standardisation.apply(x));
}

}  // namespace fairmi

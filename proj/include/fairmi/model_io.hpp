#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "fairmi/data.hpp"
#include "fairmi/fairreg.hpp"

namespace fairmi {

nlohmann::json to_json(const TrainingConfig& config);

/// Reads lambda_w, lambda_f, regulariser (+ regulariser_params), optimiser,
/// init, init_seed and n_starts; absent keys keep their defaults.
TrainingConfig training_config_from_json(const nlohmann::json& j);

/// Serialised regressor: theta, training config, feature names and the
/// standardisation that maps raw feature columns to model inputs.
struct ModelFile {
  Eigen::VectorXd theta;
  std::vector<std::string> feature_names;
  Standardisation standardisation;
  nlohmann::json config;
};

void save_model(const std::filesystem::path& path, const TrainedModel& model, const Dataset& ds);
ModelFile load_model(const std::filesystem::path& path);

/// Scores for a raw feature CSV. Throws DataError if a model feature column is
/// missing or a cell is not numeric.
Eigen::VectorXd predict_csv(const ModelFile& model, const CsvTable& table);

}  // namespace fairmi

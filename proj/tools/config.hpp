#pragma once

#include "lrsgs/dataset.hpp"
#include "lrsgs/densify_transform.hpp"
#include "lrsgs/optimizer.hpp"

#include <json.hpp>

namespace lrsgs::cli {

/// Every tunable of the pipeline. `prepare.lidar` and `prepare.features` mirror the top-level sections.
struct Config {
    LidarModelConfig lidar_model;
    FeatureConfig feature_extraction;
    LossWeights loss;
    DensifyConfig densify;
    TrainConfig train;
    PrepareConfig prepare;

    /// Runs every module's validation. Throws Config.
    void validate() const;
    PrepareConfig prepare_config() const;
};

/// Library defaults with thread counts set to the hardware concurrency.
Config default_config();

/// Missing keys keep their value in `base`; unknown keys, wrong types and failed validation throw Config.
Config parse_config(const nlohmann::json& j, const Config& base = default_config());
Config load_config(const fs::path& path, const Config& base = default_config());
nlohmann::json to_json(const Config& config);

} // namespace lrsgs::cli

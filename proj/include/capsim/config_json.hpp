#pragma once

#include <nlohmann/json.hpp>

#include "capsim/column.hpp"

// JSON <-> config conversions shared between the loaders and the harness.
namespace capsim {

ColumnParams column_params_from_json(const nlohmann::json& j);
nlohmann::json column_params_to_json(const ColumnParams& p);
StepConfig step_config_from_json(const nlohmann::json& j);

}  // namespace capsim

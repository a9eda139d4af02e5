#pragma once

#include <json.hpp>
#include <string>

#include "freespec/model.hpp"

namespace freespec {

// Document shape: {"d": int, "a0": [entry, ...] row-major, "coeffs": [[entry, ...], ...]}.
// An entry is a number, a decimal string, or an [re, im] pair of those.
GaussianSeriesModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const GaussianSeriesModel& m);
GaussianSeriesModel load_model(const std::string& path);

}  // namespace freespec

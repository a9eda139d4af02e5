#include "freespec/json_io.hpp"

#include <fstream>

namespace freespec {
namespace {

double scalar_from(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    try {
      return std::stod(j.get<std::string>());
    } catch (const std::exception&) {
      throw ValidationError("model json: bad decimal string '" + j.get<std::string>() + "'");
    }
  }
  throw ValidationError("model json: entry must be a number or decimal string");
}

Complex entry_from(const nlohmann::json& j) {
  if (j.is_array()) {
    if (j.size() != 2) throw ValidationError("model json: [re, im] entry must have 2 elements");
    return Complex(scalar_from(j[0]), scalar_from(j[1]));
  }
  return Complex(scalar_from(j), 0.0);
}

CMat matrix_from(const nlohmann::json& j, int d) {
  if (!j.is_array() || static_cast<int>(j.size()) != d * d)
    throw ValidationError("model json: matrix must be a row-major list of d*d entries");
  CMat a(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) a(r, c) = entry_from(j[r * d + c]);
  return a;
}

nlohmann::json matrix_to(const CMat& a) {
  nlohmann::json out = nlohmann::json::array();
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      out.push_back(nlohmann::json::array({a(r, c).real(), a(r, c).imag()}));
  return out;
}

}  // namespace

GaussianSeriesModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("d") || !j.contains("a0"))
    throw ValidationError("model json: need {\"d\", \"a0\", \"coeffs\"}");
  int d = j["d"].get<int>();
  if (d < 1) throw ValidationError("model json: d must be >= 1");
  CMat a0 = matrix_from(j["a0"], d);
  std::vector<CMat> coeffs;
  if (j.contains("coeffs")) {
    for (const auto& c : j["coeffs"]) coeffs.push_back(matrix_from(c, d));
  }
  return GaussianSeriesModel::from_dense(a0, coeffs);
}

nlohmann::json model_to_json(const GaussianSeriesModel& m) {
  nlohmann::json j;
  j["d"] = m.dim();
  j["a0"] = matrix_to(m.a0());
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : m.coeffs()) cs.push_back(matrix_to(c.to_dense()));
  j["coeffs"] = cs;
  return j;
}

GaussianSeriesModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError("model file is not valid json: " + std::string(e.what()));
  }
  return model_from_json(j);
}

}  // namespace freespec

#include "ctd/policy_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ctd/errors.hpp"

namespace ctd {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError(std::string("weights: ") + what + " is not a matrix");
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  MatrixXd m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ParseError(std::string("weights: ragged matrix in ") + what);
    for (size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

VectorXd vector_from_json(const json& j, const char* what) {
  if (!j.is_array())
    throw ParseError(std::string("weights: ") + what + " is not a vector");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

std::string weights_to_json(const PolicyNet& net) {
  json j;
  j["format_version"] = kFormatVersion;
  j["dims"]["d_obs"] = net.dims.d_obs;
  j["dims"]["mlp_widths"] = net.dims.mlp_widths;
  j["dims"]["n_cells"] = net.dims.n_cells;
  j["dims"]["d_act"] = net.dims.d_act;
  j["mlp"] = json::array();
  for (const auto& layer : net.mlp)
    j["mlp"].push_back({{"w", matrix_to_json(layer.w)}, {"b", vector_to_json(layer.b)}});
  j["lstm"]["w_ih"] = matrix_to_json(net.w_ih);
  j["lstm"]["w_hh"] = matrix_to_json(net.w_hh);
  j["lstm"]["b"] = vector_to_json(net.b_lstm);
  j["fc"]["w"] = matrix_to_json(net.w_fc);
  j["fc"]["b"] = vector_to_json(net.b_fc);
  return j.dump(1);
}

PolicyNet weights_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("weights: malformed JSON: ") + e.what());
  }
  if (!j.contains("format_version"))
    throw ParseError("weights: missing format_version");
  if (j["format_version"].get<int>() != kFormatVersion)
    throw ParseError("weights: unsupported format_version");
  for (const char* key : {"dims", "mlp", "lstm", "fc"})
    if (!j.contains(key))
      throw ParseError(std::string("weights: missing field ") + key);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "format_version" && k != "dims" && k != "mlp" && k != "lstm" &&
        k != "fc")
      throw ConfigError("weights: unknown field " + k);
  }

  PolicyNet net;
  try {
    net.dims.d_obs = j["dims"]["d_obs"].get<int>();
    net.dims.mlp_widths = j["dims"]["mlp_widths"].get<std::vector<int>>();
    net.dims.n_cells = j["dims"]["n_cells"].get<int>();
    net.dims.d_act = j["dims"]["d_act"].get<int>();
    for (const auto& layer : j["mlp"])
      net.mlp.push_back(
          {matrix_from_json(layer.at("w"), "mlp.w"), vector_from_json(layer.at("b"), "mlp.b")});
    net.w_ih = matrix_from_json(j["lstm"]["w_ih"], "lstm.w_ih");
    net.w_hh = matrix_from_json(j["lstm"]["w_hh"], "lstm.w_hh");
    net.b_lstm = vector_from_json(j["lstm"]["b"], "lstm.b");
    net.w_fc = matrix_from_json(j["fc"]["w"], "fc.w");
    net.b_fc = vector_from_json(j["fc"]["b"], "fc.b");
  } catch (const json::exception& e) {
    throw ParseError(std::string("weights: bad structure: ") + e.what());
  }
  net.check_consistent();  // ConfigError on dims/shape disagreement
  return net;
}

void save_weights(const PolicyNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("weights: cannot open " + path + " for writing");
  out << weights_to_json(net);
  out << "\n";
}

PolicyNet load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("weights: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return weights_from_json(ss.str());
}

}  // namespace ctd

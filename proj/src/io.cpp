#include "gbs/io.hpp"

#include <iomanip>

namespace gbs {

Json to_json(const EvidenceEstimate& e) {
  Json j;
  j["method"] = to_string(e.method);
  j["ln_Z"] = e.ln_z;
  j["std_err"] = e.std_err;
  j["n_p"] = e.n_p;
  j["n_q"] = e.n_q;
  j["tau_f2"] = e.tau_f2;
  j["evals"] = {{"likelihood", e.evals.likelihood}, {"gradient", e.evals.gradient}};
  if (e.method == Method::AIS || e.method == Method::RAIS) {
    j["chain_ln_w"] = e.chain_log_weights;
    j["failed_chains"] = e.failed_chains;
  }
  return j;
}

EvidenceEstimate estimate_from_json(const Json& j) {
  EvidenceEstimate e;
  const auto m = parse_method(j.at("method").get<std::string>());
  if (!m) throw std::invalid_argument("unknown method tag in estimate record");
  e.method = *m;
  e.ln_z = j.at("ln_Z").get<double>();
  e.std_err = j.at("std_err").get<double>();
  e.n_p = j.at("n_p").get<std::int64_t>();
  e.n_q = j.at("n_q").get<std::int64_t>();
  e.tau_f2 = j.at("tau_f2").get<double>();
  e.evals.likelihood = j.at("evals").at("likelihood").get<std::int64_t>();
  e.evals.gradient = j.at("evals").at("gradient").get<std::int64_t>();
  if (j.contains("chain_ln_w")) e.chain_log_weights = j.at("chain_ln_w").get<std::vector<double>>();
  if (j.contains("failed_chains")) e.failed_chains = j.at("failed_chains").get<int>();
  return e;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw std::invalid_argument("ragged matrix in JSON");
    for (std::size_t k = 0; k < rows[i].size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return m;
}

Json to_json(const FlowModel& model) {
  Json layers = Json::array();
  for (const auto& layer : model.layers()) {
    Json marginals = Json::array();
    for (const auto& m : layer.marginals)
      marginals.push_back({{"knots_x", m.knots_x()}, {"knots_y", m.knots_y()}, {"slopes", m.slopes()}});
    layers.push_back({{"rotation", matrix_to_json(layer.rotation)}, {"marginals", marginals}});
  }
  return {{"type", "gaussianizing_flow"},
          {"dim", model.dim()},
          {"tails", "linear"},
          {"interpolation", "monotone_cubic_hermite"},
          {"layers", layers}};
}

FlowModel flow_from_json(const Json& j) {
  if (j.value("type", "") != "gaussianizing_flow") throw std::invalid_argument("not a gaussianizing_flow document");
  FlowModel model(j.at("dim").get<Eigen::Index>());
  for (const auto& jl : j.at("layers")) {
    FlowLayer layer;
    layer.rotation = matrix_from_json(jl.at("rotation"));
    for (const auto& jm : jl.at("marginals"))
      layer.marginals.emplace_back(jm.at("knots_x").get<std::vector<double>>(),
                                   jm.at("knots_y").get<std::vector<double>>(),
                                   jm.at("slopes").get<std::vector<double>>());
    model.add_layer(std::move(layer));
  }
  return model;
}

const std::vector<std::string>& summary_csv_columns() {
  static const std::vector<std::string> cols{
      "target", "method", "n_runs", "n_failed", "fiducial", "median_ln_Z", "q05", "q25", "q50", "q75", "q95",
      "mean_std_err", "empirical_std", "coverage_2sigma", "mean_likelihood_evals", "mean_gradient_evals"};
  return cols;
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  const auto& cols = summary_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    const auto& s = r.summary;
    os << r.target << "," << r.method << "," << s.n << "," << r.n_failed << "," << r.fiducial << "," << s.median_ln_z
       << "," << s.q05 << "," << s.q25 << "," << s.q50 << "," << s.q75 << "," << s.q95 << "," << s.mean_std_err << ","
       << s.empirical_std << "," << s.coverage << "," << s.mean_likelihood_evals << "," << s.mean_gradient_evals
       << "\n";
  }
}

Json to_json(const SummaryRow& r) {
  const auto& s = r.summary;
  return {{"target", r.target},
          {"method", r.method},
          {"n_runs", s.n},
          {"n_failed", r.n_failed},
          {"fiducial", r.fiducial},
          {"median_ln_Z", s.median_ln_z},
          {"quantiles", {{"q05", s.q05}, {"q25", s.q25}, {"q50", s.q50}, {"q75", s.q75}, {"q95", s.q95}}},
          {"mean_std_err", s.mean_std_err},
          {"empirical_std", s.empirical_std},
          {"coverage_2sigma", s.coverage},
          {"mean_likelihood_evals", s.mean_likelihood_evals},
          {"mean_gradient_evals", s.mean_gradient_evals}};
}

}  // namespace gbs

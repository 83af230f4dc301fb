#pragma once

#include "gbs/diagnostics.hpp"
#include "gbs/estimators.hpp"
#include "gbs/flow.hpp"
#include "gbs/types.hpp"

#include <json.hpp>

#include <ostream>
#include <string>
#include <vector>

namespace gbs {

using Json = nlohmann::json;

/// {method, ln_Z, std_err, n_p, n_q, tau_f2, evals: {likelihood, gradient}}
/// plus chain_ln_w / failed_chains for annealing estimates.
Json to_json(const EvidenceEstimate& e);
EvidenceEstimate estimate_from_json(const Json& j);

Json to_json(const FlowModel& model);
FlowModel flow_from_json(const Json& j);

/// Matrix as a JSON array of rows.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

/// Fixed column order of the aggregate CSV.
const std::vector<std::string>& summary_csv_columns();

struct SummaryRow {
  std::string target;
  std::string method;
  int n_failed = 0;
  double fiducial = 0.0;
  ReplicationSummary summary;
};

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);
Json to_json(const SummaryRow& row);

}  // namespace gbs

#pragma once

#include "gbs/annealing.hpp"
#include "gbs/diagnostics.hpp"
#include "gbs/io.hpp"
#include "gbs/pipelines.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gbs {

/// One benchmark configuration: target x estimator x seeds.
struct RunConfig {
  std::string target;
  Method estimator = Method::GBS;
  std::vector<std::uint64_t> seeds;
  std::uint64_t master_seed = 0;
  PipelineConfig pipeline;
  AnnealConfig anneal;
  std::string output;  ///< directory; empty disables file output

  void validate() const;
};

/// Tags accepted on the command line and in config files.
const std::vector<std::string>& estimator_tags();
std::optional<Method> parse_estimator_tag(const std::string& tag);
std::string estimator_tag(Method m);

/// "0..7" (inclusive range) or "1,4,9".
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Defaults for a target: iteration counts and annealing ladder lengths used
/// by the benchmark protocol.
RunConfig default_config(const std::string& target, Method estimator);

/// Applies a JSON config document on top of the target/estimator defaults.
/// Unknown fields are rejected.
RunConfig parse_run_config(const Json& doc);

struct RunRecord {
  std::uint64_t seed = 0;
  std::optional<EvidenceEstimate> estimate;
  std::string error;
  double wall_seconds = 0.0;
};

struct RunReport {
  RunConfig config;
  std::vector<RunRecord> records;
  SummaryRow summary;
  bool all_ok() const;
};

/// Seed actually fed to the estimator for seeds[index].
std::uint64_t run_seed(std::uint64_t master_seed, std::uint64_t seed);

/// Runs one estimate for a single seed.
EvidenceEstimate run_single(const TargetDistribution& target, const RunConfig& cfg, std::uint64_t seed);

/// Runs every seed (in parallel worker slots) and prints one line per run to `log`.
RunReport run(const RunConfig& cfg, std::ostream& log);

/// Per-run record without wall-clock fields (byte-stable across reruns).
Json record_json(const RunConfig& cfg, const RunRecord& rec);

/// Writes <output>/<target>_<tag>_seed<k>.json, a .meta.json with timings,
/// and <output>/<target>_<tag>_summary.csv.
void write_outputs(const RunReport& report);

SummaryRow summarize(const RunConfig& cfg, const std::vector<RunRecord>& records);

}  // namespace gbs

#include "gbs/runner.hpp"

#include "gbs/math.hpp"
#include "gbs/parallel.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace gbs {

const std::vector<std::string>& estimator_tags() {
  static const std::vector<std::string> tags{"gbs", "gbsl", "gis", "ghm", "wbs", "ais", "rais"};
  return tags;
}

std::optional<Method> parse_estimator_tag(const std::string& tag) {
  static const std::map<std::string, Method> m{{"gbs", Method::GBS}, {"gbsl", Method::GBSL}, {"gis", Method::GIS},
                                               {"ghm", Method::GHM}, {"wbs", Method::WBS},   {"ais", Method::AIS},
                                               {"rais", Method::RAIS}};
  const auto it = m.find(tag);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

std::string estimator_tag(Method m) {
  std::string s = to_string(m);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto to_u64 = [&](const std::string& s) {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad seed '" + s + "'");
    return static_cast<std::uint64_t>(v);
  };
  try {
    if (const auto dots = text.find(".."); dots != std::string::npos) {
      const auto lo = to_u64(text.substr(0, dots)), hi = to_u64(text.substr(dots + 2));
      if (hi < lo) throw std::invalid_argument("empty seed range");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else {
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(to_u64(item));
    }
  } catch (const std::logic_error& e) {
    throw std::invalid_argument("invalid seed list '" + text + "': " + e.what());
  }
  if (out.empty()) throw std::invalid_argument("seed list is empty");
  return out;
}

RunConfig default_config(const std::string& target, Method estimator) {
  RunConfig cfg;
  cfg.target = target;
  cfg.estimator = estimator;
  cfg.seeds = parse_seeds("0..7");
  const bool long_chains = target == "cauchy48" || target == "ring64";
  cfg.pipeline.sampler.n_chains = 8;
  cfg.pipeline.sampler.n_iters = long_chains ? 5000 : 2500;
  cfg.pipeline.flow.n_layers = 10;
  // number of annealing states at matched cost
  static const std::map<std::string, std::pair<int, int>> ladder{
      {"funnel16", {800, 700}}, {"banana32", {2000, 1500}}, {"cauchy48", {3000, 2500}}, {"ring64", {3500, 3000}}};
  const auto it = ladder.find(target);
  const auto [t_ais, t_rais] = it != ladder.end() ? it->second : std::pair{1000, 1000};
  cfg.anneal.T = estimator == Method::RAIS ? t_rais : t_ais;
  cfg.anneal.chains = 16;
  cfg.anneal.warmup_iters = 1000;
  return cfg;
}

namespace {

void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw std::invalid_argument("unknown field '" + key + "' in " + where);
}

template <typename T>
void maybe(const Json& obj, const char* key, T& field) {
  if (obj.contains(key)) field = obj.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const Json& doc) {
  reject_unknown(doc, {"target", "estimator", "seeds", "replications", "master_seed", "sampler", "flow", "policy",
                       "schedule", "output"},
                 "run config");
  const auto target = doc.at("target").get<std::string>();
  const auto tag = doc.at("estimator").get<std::string>();
  const auto method = parse_estimator_tag(tag);
  if (!method) throw std::invalid_argument("unknown estimator '" + tag + "'");
  RunConfig cfg = default_config(target, *method);

  if (doc.contains("seeds")) {
    const auto& s = doc.at("seeds");
    cfg.seeds = s.is_string() ? parse_seeds(s.get<std::string>()) : s.get<std::vector<std::uint64_t>>();
  }
  if (doc.contains("replications")) {
    const int n = doc.at("replications").get<int>();
    if (n < 1) throw std::invalid_argument("replications must be positive");
    cfg.seeds = parse_seeds("0.." + std::to_string(n - 1));
  }
  maybe(doc, "master_seed", cfg.master_seed);
  maybe(doc, "output", cfg.output);
  if (doc.contains("sampler")) {
    const auto& j = doc.at("sampler");
    reject_unknown(j, {"n_chains", "n_iters", "warmup_frac", "max_tree_depth", "target_accept"}, "sampler");
    auto& s = cfg.pipeline.sampler;
    maybe(j, "n_chains", s.n_chains);
    maybe(j, "n_iters", s.n_iters);
    maybe(j, "warmup_frac", s.warmup_frac);
    maybe(j, "max_tree_depth", s.max_tree_depth);
    maybe(j, "target_accept", s.target_accept);
  }
  if (doc.contains("flow")) {
    const auto& j = doc.at("flow");
    reject_unknown(j, {"n_layers", "n_knots", "n_random_directions", "bandwidth_factor", "max_score_samples",
                       "max_ascent_samples", "ascent_steps"},
                   "flow");
    auto& f = cfg.pipeline.flow;
    maybe(j, "n_layers", f.n_layers);
    maybe(j, "n_knots", f.n_knots);
    maybe(j, "n_random_directions", f.n_random_directions);
    maybe(j, "bandwidth_factor", f.bandwidth_factor);
    maybe(j, "max_score_samples", f.max_score_samples);
    maybe(j, "max_ascent_samples", f.max_ascent_samples);
    maybe(j, "ascent_steps", f.ascent_steps);
  }
  if (doc.contains("policy")) {
    const auto& j = doc.at("policy");
    reject_unknown(j, {"f_err", "f_eva", "n_q0"}, "policy");
    auto& p = cfg.pipeline.policy;
    maybe(j, "f_err", p.f_err);
    maybe(j, "f_eva", p.f_eva);
    if (j.contains("n_q0")) p.n_q0 = j.at("n_q0").get<std::int64_t>();
  }
  if (doc.contains("schedule")) {
    const auto& j = doc.at("schedule");
    reject_unknown(j, {"T", "delta", "chains", "warmup_iters", "max_tree_depth", "target_accept"}, "schedule");
    auto& a = cfg.anneal;
    maybe(j, "T", a.T);
    maybe(j, "delta", a.delta);
    maybe(j, "chains", a.chains);
    maybe(j, "warmup_iters", a.warmup_iters);
    maybe(j, "max_tree_depth", a.max_tree_depth);
    maybe(j, "target_accept", a.target_accept);
  }
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  if (!make_target(target)) throw std::invalid_argument("unknown target '" + target + "'");
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  switch (estimator) {
    case Method::GBS: case Method::GBSL: case Method::GIS: case Method::GHM: case Method::WBS: case Method::AIS:
    case Method::RAIS: break;
    default: throw std::invalid_argument("estimator " + to_string(estimator) + " is not runnable on its own");
  }
  pipeline.sampler.validate();
  pipeline.policy.validate();
  anneal.validate();
}

bool RunReport::all_ok() const {
  for (const auto& r : records)
    if (!r.estimate) return false;
  return true;
}

std::uint64_t run_seed(std::uint64_t master_seed, std::uint64_t seed) {
  if (master_seed == 0) return seed;
  return stage_seed(master_seed, 0x100000 + seed);
}

EvidenceEstimate run_single(const TargetDistribution& target, const RunConfig& cfg, std::uint64_t seed) {
  switch (cfg.estimator) {
    case Method::GBS: return gbs(target, cfg.pipeline, seed);
    case Method::GBSL: return gbsl(target, cfg.pipeline, seed);
    case Method::GIS: return gis(target, cfg.pipeline, seed);
    case Method::GHM: return ghm(target, cfg.pipeline, seed);
    case Method::WBS: return wbs(target, cfg.pipeline, seed);
    case Method::AIS: return ais(target, cfg.anneal, seed);
    case Method::RAIS: return rais(target, cfg.anneal, seed);
    default: throw std::invalid_argument("estimator not runnable");
  }
}

SummaryRow summarize(const RunConfig& cfg, const std::vector<RunRecord>& records) {
  SummaryRow row;
  row.target = cfg.target;
  row.method = to_string(cfg.estimator);
  row.fiducial = fiducial_ln_z(cfg.target).value_or(0.0);
  std::vector<EvidenceEstimate> ok;
  for (const auto& r : records) {
    if (r.estimate) ok.push_back(*r.estimate);
    else ++row.n_failed;
  }
  if (ok.size() >= 2) {
    row.summary = replication_summary(ok, row.fiducial);
  } else if (ok.size() == 1) {
    const auto& e = ok.front();
    auto& s = row.summary;
    s.n = 1;
    s.q05 = s.q25 = s.q50 = s.q75 = s.q95 = e.ln_z - row.fiducial;
    s.median_ln_z = e.ln_z;
    s.mean_std_err = e.std_err;
    s.coverage = std::abs(e.ln_z - row.fiducial) <= 2.0 * e.std_err ? 1.0 : 0.0;
    s.mean_likelihood_evals = static_cast<double>(e.evals.likelihood);
    s.mean_gradient_evals = static_cast<double>(e.evals.gradient);
  }
  return row;
}

RunReport run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto target = *make_target(cfg.target);
  RunReport report;
  report.config = cfg;
  report.records.resize(cfg.seeds.size());
  std::mutex log_mutex;

  // chains inside a run are parallel too; split the worker budget
  parallel_for(static_cast<int>(cfg.seeds.size()), [&](int i) {
    auto& rec = report.records[static_cast<std::size_t>(i)];
    rec.seed = cfg.seeds[static_cast<std::size_t>(i)];
    const auto start = std::chrono::steady_clock::now();
    try {
      rec.estimate = run_single(target, cfg, run_seed(cfg.master_seed, rec.seed));
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(log_mutex);
    if (rec.estimate) {
      const auto& e = *rec.estimate;
      log << std::fixed << std::setprecision(4) << to_string(e.method) << " " << cfg.target << " seed=" << rec.seed
          << " lnZ=" << e.ln_z << " +/- " << e.std_err << " likelihood_evals=" << e.evals.likelihood
          << " gradient_evals=" << e.evals.gradient << "\n";
    } else {
      log << to_string(cfg.estimator) << " " << cfg.target << " seed=" << rec.seed << " FAILED: " << rec.error << "\n";
    }
    log.flush();
  }, std::max(1, worker_count() / std::max(1, cfg.pipeline.sampler.n_chains)));

  report.summary = summarize(cfg, report.records);
  return report;
}

Json record_json(const RunConfig& cfg, const RunRecord& rec) {
  Json j;
  j["target"] = cfg.target;
  j["seed"] = rec.seed;
  j["master_seed"] = cfg.master_seed;
  if (rec.estimate) {
    j["status"] = "ok";
    j["estimate"] = to_json(*rec.estimate);
  } else {
    j["status"] = "failed";
    j["method"] = to_string(cfg.estimator);
    j["error"] = rec.error;
  }
  return j;
}

void write_outputs(const RunReport& report) {
  const auto& cfg = report.config;
  if (cfg.output.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output);
  const std::string stem = cfg.target + "_" + estimator_tag(cfg.estimator);
  for (const auto& rec : report.records) {
    const auto base = fs::path(cfg.output) / (stem + "_seed" + std::to_string(rec.seed));
    std::ofstream(base.string() + ".json") << record_json(cfg, rec).dump(2) << "\n";
    std::ofstream(base.string() + ".meta.json") << Json{{"wall_seconds", rec.wall_seconds}}.dump(2) << "\n";
  }
  std::ofstream csv(fs::path(cfg.output) / (stem + "_summary.csv"));
  write_summary_csv(csv, {report.summary});
}

}  // namespace gbs

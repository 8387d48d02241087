#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmcmc/chain.hpp"
#include "qmcmc/csv.hpp"
#include "qmcmc/models.hpp"

namespace qmcmc::harness {

enum class ProposalKind { Quench, Uniform, Local, Perturbative, EffectiveXY };

std::string to_string(ProposalKind kind);
ProposalKind proposal_kind_from_string(const std::string& s);

std::vector<double> default_h_grid();       // 0.1, 0.2, ..., 3.0
std::vector<double> default_trace_times();  // 0, 0.25, ..., 20

struct ModelSpec {
  std::string type = "sk";  // ising, sk or pspin
  std::vector<int> sizes{7, 8, 9, 10};
  int order = 3;
  std::optional<double> field_halfwidth;  // sk: 0.25, pspin: 0

  double halfwidth() const;
};

struct ProposalSpec {
  ProposalKind kind = ProposalKind::Quench;
  std::vector<double> h = default_h_grid();
  bool long_time = true;
  std::vector<double> t;  // used when long_time is false
};

struct TraceSpec {
  std::vector<double> t = default_trace_times();
  std::optional<double> h_max;
  std::optional<double> h_min;
};

struct IsingBoundSpec {
  std::vector<int> exact_sizes{6, 8, 10, 12};
  std::vector<int> bound_sizes{6, 8, 10, 12, 14, 16, 18, 20, 22, 24};
};

enum class CutFamily { Thresholds, Best, None };

struct ExperimentConfig {
  ModelSpec model;
  double beta = 5.0;
  ProposalSpec proposal;
  int instances = 100;
  std::uint64_t base_seed = 0;
  CutFamily cuts = CutFamily::Thresholds;
  std::filesystem::path output_dir = "qmcmc-out";
  int max_spins = models::kDefaultMaxSpins;
  int threads = 1;
  double ipr_window_fraction = 0.1;  // lowest fraction of the energy range
  TraceSpec trace;
  IsingBoundSpec ising;

  /// Ising chains carry no disorder and always run a single instance.
  int ensemble_size() const;

  /// Throws ConfigError on any invalid or unknown field.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// The classical model for size `spins` and ensemble member `instance`.
models::ClassicalModel make_model(const ExperimentConfig& config, int spins, std::uint64_t instance);

/// Chain for one proposal setting. `t` is ignored for the long-time limit and
/// for the classical proposals.
struct ChainPoint {
  chain::TransitionMatrix chain;
  chain::GapResult gap;
  double db_residual = 0.0;
};

ChainPoint evaluate_chain(const models::BoltzmannTable& boltzmann, const quench::ProposalMatrix& q);

struct RunSummary {
  std::string command;
  std::size_t tasks = 0;
  std::size_t skipped = 0;  // already present from an earlier run
  std::vector<std::string> failures;
  std::map<std::string, std::size_t> rows;
  double wall_seconds = 0.0;
  nlohmann::json notes;  // run-specific choices, copied into the manifest

  bool ok() const { return failures.empty(); }
};

/// Runs tasks on a bounded pool and hands each result to `sink` in task order.
void run_ordered(std::size_t tasks, int threads, const std::function<std::vector<std::vector<csv::Row>>(std::size_t)>& work,
                 const std::function<void(std::size_t, const std::vector<std::vector<csv::Row>>&)>& sink,
                 const std::function<void(std::size_t, const std::string&)>& on_error);

// Output files, relative to the output directory.
inline constexpr const char* kGapsFile = "gaps.csv";
inline constexpr const char* kIprFile = "ipr.csv";
inline constexpr const char* kIprVectorsFile = "ipr_vectors.csv";
inline constexpr const char* kGapSummaryFile = "gap_summary.csv";
inline constexpr const char* kGapFitsFile = "gap_fits.csv";
inline constexpr const char* kIprFitsFile = "ipr_fits.csv";
inline constexpr const char* kBaselinesFile = "baselines.csv";
inline constexpr const char* kBaselineFitsFile = "baseline_fits.csv";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kTraceSummaryFile = "trace_summary.csv";
inline constexpr const char* kIsingExactFile = "ising_exact.csv";
inline constexpr const char* kIsingBoundFile = "ising_bound.csv";
inline constexpr const char* kBoundsFile = "bounds.csv";

struct SweepOptions {
  bool gaps = true;
  bool ipr = false;
  bool ipr_vectors = false;
};

/// Per (N, instance): every (h, t) of the proposal spec. Appends gaps.csv
/// (model,N,instance,h,t_mode,beta,delta,lambda2,reducible,db_residual) and,
/// when asked, ipr.csv (N,instance,h,window_lo,window_hi,window_count,window_ipr).
RunSummary run_gap_grid(const ExperimentConfig& config, const SweepOptions& options = {});
RunSummary run_ipr_scan(const ExperimentConfig& config, bool export_vectors = false);

struct SizeStats {
  int spins = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double stderr_ = 0.0;
};

SizeStats size_stats(int spins, std::vector<double> values);

/// log2(mean) = prefactor - k N.
struct ScalingFit {
  double k = 0.0;
  double prefactor = 0.0;
  double residual = 0.0;  // root mean square of log2 residuals
  bool weighted = false;
  std::vector<SizeStats> sizes;
};

/// Weighted least squares of log2(mean) against N; weights are the inverse
/// delta-method variances (stderr / (mean ln 2))^2, or uniform when any
/// standard error is zero.
ScalingFit fit_scaling(const std::vector<SizeStats>& sizes);

/// Per-h fits of mean gap (long-time rows of gaps.csv) and of window IPR
/// (ipr.csv, if present). Writes gap_summary.csv, gap_fits.csv, ipr_fits.csv.
RunSummary run_fit(const ExperimentConfig& config);

struct HFit {
  double h = 0.0;
  ScalingFit fit;
};

std::vector<HFit> fit_gap_table(const csv::Table& gaps);
std::vector<HFit> fit_ipr_table(const csv::Table& ipr);

/// Uniform and single-flip local chains on the same disorder. Writes
/// baselines.csv (model,N,instance,strategy,beta,delta,lambda2,reducible,db_residual)
/// and baseline_fits.csv with k_uniform, k_local and k_local_times_n.
RunSummary classical_baselines(const ExperimentConfig& config);

/// A strategy with a vanishing mean gap at some N (a periodic chain, say) has
/// no fit; the reason is kept in `errors`.
struct BaselineFits {
  std::optional<ScalingFit> uniform;
  std::optional<ScalingFit> local;
  std::optional<ScalingFit> local_times_n;
  std::vector<std::string> errors;
};

BaselineFits fit_baselines(const csv::Table& baselines);

/// Mean gap against quench time at the h of largest and smallest long-time
/// mean gap (over the proposal h grid, at the largest size) unless fixed in
/// the config. Writes trace.csv and trace_summary.csv.
RunSummary run_time_trace(const ExperimentConfig& config);

/// Exact gaps of the Ising chain and the analytic bound. Writes ising_exact.csv,
/// ising_bound.csv (N,h,t_mode,t,beta,first_term_log,second_term,total) and,
/// for a finite-t grid, bound_grid_N<n>.csv (h,t,bound).
RunSummary run_ising_bound(const ExperimentConfig& config);

/// Bound ladder over energy-threshold cuts of long-time quench chains. Writes
/// bounds.csv (N,instance,h,beta,cut_threshold,delta,lambda_B,fg,cs,ipr_bound,fe_bound,S_f,S_g,E_c).
RunSummary run_cuts(const ExperimentConfig& config);

/// config.resolved.json and manifest.json in the output directory.
void write_run_metadata(const ExperimentConfig& config, const RunSummary& summary);

std::string version();

}  // namespace qmcmc::harness

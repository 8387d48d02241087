#include "qmcmc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>
#include <variant>

#include <Eigen/Core>

#include "qmcmc/bottleneck.hpp"
#include "qmcmc/error.hpp"
#include "qmcmc/ising_analytic.hpp"
#include "qmcmc/quench.hpp"

namespace qmcmc::harness {
namespace {

using nlohmann::json;
using csv::Row;
using Blocks = std::vector<std::vector<Row>>;

double tidy(double v) { return std::round(v * 1e9) / 1e9; }

std::vector<double> arange(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw ConfigError("grid needs step > 0 and stop >= start");
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (n > 1'000'000) throw ConfigError("grid has too many points");
  std::vector<double> out;
  for (long i = 0; i < n; ++i) out.push_back(tidy(start + static_cast<double>(i) * step));
  return out;
}


void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown field '" + key + "' in " + where);
    }
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::vector<double> read_grid(const json& j, const std::string& where) {
  if (j.is_array()) {
    std::vector<double> out;
    for (const auto& v : j) {
      if (!v.is_number()) throw ConfigError(where + " must hold numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  if (j.is_object()) {
    reject_unknown(j, {"start", "stop", "step"}, where);
    return arange(get<double>(j, "start", where), get<double>(j, "stop", where), get<double>(j, "step", where));
  }
  if (j.is_number()) return {j.get<double>()};
  throw ConfigError(where + " must be a list, a number or {start, stop, step}");
}

std::vector<int> read_sizes(const json& j, const std::string& where) {
  if (j.is_number_integer()) return {j.get<int>()};
  if (j.is_object()) {
    reject_unknown(j, {"start", "stop", "step"}, where);
    const int start = get<int>(j, "start", where);
    const int stop = get<int>(j, "stop", where);
    const int step = j.contains("step") ? get<int>(j, "step", where) : 1;
    if (step <= 0 || stop < start) throw ConfigError(where + " needs step > 0 and stop >= start");
    std::vector<int> out;
    for (int n = start; n <= stop; n += step) out.push_back(n);
    return out;
  }
  if (!j.is_array()) throw ConfigError(where + " must be a list of sizes");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ConfigError(where + " must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

std::string cut_family_name(CutFamily c) {
  switch (c) {
    case CutFamily::Thresholds: return "thresholds";
    case CutFamily::Best: return "best";
    case CutFamily::None: return "none";
  }
  return "none";
}

std::string task_key(int spins, std::uint64_t instance) {
  return std::to_string(spins) + "|" + std::to_string(instance);
}

std::string num(double v) { return csv::number(v); }

Row gap_row(const std::string& model, int spins, std::uint64_t instance, double h, const std::string& t_mode,
            double beta, const ChainPoint& point) {
  return {model,
          std::to_string(spins),
          std::to_string(instance),
          num(h),
          t_mode,
          num(beta),
          num(point.gap.delta),
          num(point.gap.lambda2_abs),
          point.gap.reducible ? "1" : "0",
          num(point.db_residual)};
}

const Row kGapHeader{"model", "N", "instance", "h", "t_mode", "beta", "delta", "lambda2", "reducible", "db_residual"};
const Row kIprHeader{"N", "instance", "h", "window_lo", "window_hi", "window_count", "window_ipr"};
const Row kIprVectorHeader{"N", "instance", "h", "index", "energy", "ipr"};
const Row kBaselineHeader{"model", "N", "instance", "strategy", "beta", "delta", "lambda2", "reducible", "db_residual"};
const Row kBoundHeader{"N",  "instance", "h",      "beta", "cut_threshold", "delta", "lambda_B",
                       "fg", "cs",       "ipr_bound", "fe_bound", "S_f",        "S_g",   "E_c"};
const Row kIsingBoundHeader{"N", "h", "t_mode", "t", "beta", "first_term_log", "second_term", "total"};
const Row kIsingExactHeader{"N",     "h",       "t_mode",    "t",           "beta",
                            "delta", "lambda2", "reducible", "db_residual", "bound_total"};

bool spectral_kind(ProposalKind k) {
  return k == ProposalKind::Quench || k == ProposalKind::EffectiveXY;
}

/// Quench-type proposal settings evaluated for one (N, instance).
struct Setting {
  double h = 0.0;
  std::optional<double> t;  // nullopt: long-time
  std::string t_mode() const { return t ? num(*t) : "long"; }
};

std::vector<Setting> settings(const ExperimentConfig& c) {
  std::vector<Setting> out;
  switch (c.proposal.kind) {
    case ProposalKind::Uniform:
    case ProposalKind::Local:
      out.push_back({0.0, std::nullopt});
      break;
    case ProposalKind::Perturbative:
      for (double h : c.proposal.h) out.push_back({h, std::nullopt});
      break;
    case ProposalKind::Quench:
    case ProposalKind::EffectiveXY:
      for (double h : c.proposal.h) {
        if (c.proposal.long_time) {
          out.push_back({h, std::nullopt});
        } else {
          for (double t : c.proposal.t) out.push_back({h, t});
        }
      }
      break;
  }
  return out;
}

quench::Spectrum quench_spectrum(const ExperimentConfig& c, const models::ClassicalModel& model,
                                 const Vector& energies, double h) {
  if (c.proposal.kind == ProposalKind::EffectiveXY) {
    return quench::diagonalize(quench::effective_large_h_hamiltonian(model, h, c.max_spins));
  }
  return quench::diagonalize(quench::build_hamiltonian(energies, h, c.max_spins));
}

struct Window {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

Window ipr_window(const Vector& energies, double fraction) {
  Window w;
  w.lo = energies.minCoeff();
  w.hi = w.lo + fraction * (energies.maxCoeff() - w.lo);
  w.count = static_cast<std::size_t>((energies.array() <= w.hi).count());
  return w;
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

/// One resumable output file of a sweep.
struct Output {
  std::unique_ptr<csv::BlockWriter> writer;
  std::size_t rows_per_task = 0;
};

Output open_output(const ExperimentConfig& c, const char* file, const Row& header, std::vector<std::size_t> key,
                   std::size_t rows_per_task) {
  Output o;
  o.rows_per_task = rows_per_task;
  o.writer = std::make_unique<csv::BlockWriter>(
      c.output_dir / file, header, std::move(key),
      [rows_per_task](const std::string&, std::size_t rows) { return rows == rows_per_task; });
  return o;
}

struct Task {
  int spins = 0;
  std::uint64_t instance = 0;
};

std::vector<Task> ensemble_tasks(const ExperimentConfig& c) {
  std::vector<Task> out;
  for (int n : c.model.sizes) {
    for (int i = 0; i < c.ensemble_size(); ++i) out.push_back({n, static_cast<std::uint64_t>(i)});
  }
  return out;
}

/// Runs `work` for every task not already complete in all outputs, writing
/// block k of its result to outputs[k].
void sweep(const ExperimentConfig& c, const std::vector<Task>& tasks, std::vector<Output>& outputs,
           const std::function<Blocks(const Task&)>& work, RunSummary& summary) {
  std::vector<Task> pending;
  for (const auto& t : tasks) {
    const auto key = task_key(t.spins, t.instance);
    if (std::all_of(outputs.begin(), outputs.end(), [&](const Output& o) { return o.writer->has(key); })) {
      ++summary.skipped;
    } else {
      pending.push_back(t);
    }
  }
  summary.tasks += tasks.size();
  run_ordered(
      pending.size(), c.threads, [&](std::size_t i) { return work(pending[i]); },
      [&](std::size_t i, const Blocks& blocks) {
        const auto key = task_key(pending[i].spins, pending[i].instance);
        for (std::size_t k = 0; k < outputs.size(); ++k) {
          if (!outputs[k].writer->has(key)) outputs[k].writer->write_block(blocks.at(k));
        }
      },
      [&](std::size_t i, const std::string& what) {
        summary.failures.push_back("N=" + std::to_string(pending[i].spins) +
                                   " instance=" + std::to_string(pending[i].instance) + ": " + what);
      });
  for (const auto& o : outputs) summary.rows[o.writer->path().filename().string()] = o.writer->row_count();
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> default_h_grid() { return arange(0.1, 3.0, 0.1); }
std::vector<double> default_trace_times() { return arange(0.0, 20.0, 0.25); }

std::string to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::Quench: return "quench";
    case ProposalKind::Uniform: return "uniform";
    case ProposalKind::Local: return "local";
    case ProposalKind::Perturbative: return "perturbative";
    case ProposalKind::EffectiveXY: return "effective_xy";
  }
  return "quench";
}

ProposalKind proposal_kind_from_string(const std::string& s) {
  for (auto k : {ProposalKind::Quench, ProposalKind::Uniform, ProposalKind::Local, ProposalKind::Perturbative,
                 ProposalKind::EffectiveXY}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown proposal kind '" + s + "'");
}

double ModelSpec::halfwidth() const {
  if (field_halfwidth) return *field_halfwidth;
  return type == "sk" ? 0.25 : 0.0;
}

int ExperimentConfig::ensemble_size() const { return model.type == "ising" ? 1 : instances; }

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"model", "beta", "proposal", "instances", "base_seed", "cuts", "output_dir", "max_spins",
                  "threads", "ipr_window", "trace", "ising_bound"},
                 "config");
  ExperimentConfig c;
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, {"type", "sizes", "p", "field_halfwidth"}, "model");
    if (m.contains("type")) c.model.type = get<std::string>(m, "type", "model");
    if (m.contains("sizes")) c.model.sizes = read_sizes(m["sizes"], "model.sizes");
    if (m.contains("p")) c.model.order = get<int>(m, "p", "model");
    if (m.contains("field_halfwidth") && !m["field_halfwidth"].is_null()) {
      c.model.field_halfwidth = get<double>(m, "field_halfwidth", "model");
    }
  }
  if (j.contains("beta")) c.beta = get<double>(j, "beta", "config");
  if (j.contains("proposal")) {
    const auto& p = j["proposal"];
    reject_unknown(p, {"kind", "h", "t_mode", "t"}, "proposal");
    if (p.contains("kind")) c.proposal.kind = proposal_kind_from_string(get<std::string>(p, "kind", "proposal"));
    if (p.contains("h")) c.proposal.h = read_grid(p["h"], "proposal.h");
    if (p.contains("t_mode")) {
      const auto mode = get<std::string>(p, "t_mode", "proposal");
      if (mode != "long" && mode != "finite") throw ConfigError("proposal.t_mode must be 'long' or 'finite'");
      c.proposal.long_time = mode == "long";
    }
    if (p.contains("t")) c.proposal.t = read_grid(p["t"], "proposal.t");
  }
  if (j.contains("instances")) c.instances = get<int>(j, "instances", "config");
  if (j.contains("base_seed")) c.base_seed = get<std::uint64_t>(j, "base_seed", "config");
  if (j.contains("cuts")) {
    const auto s = get<std::string>(j, "cuts", "config");
    if (s == "thresholds") {
      c.cuts = CutFamily::Thresholds;
    } else if (s == "best") {
      c.cuts = CutFamily::Best;
    } else if (s == "none") {
      c.cuts = CutFamily::None;
    } else {
      throw ConfigError("cuts must be 'thresholds', 'best' or 'none'");
    }
  }
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "output_dir", "config");
  if (j.contains("max_spins")) c.max_spins = get<int>(j, "max_spins", "config");
  if (j.contains("threads")) c.threads = get<int>(j, "threads", "config");
  if (j.contains("ipr_window")) {
    const auto& w = j["ipr_window"];
    reject_unknown(w, {"fraction"}, "ipr_window");
    if (w.contains("fraction")) c.ipr_window_fraction = get<double>(w, "fraction", "ipr_window");
  }
  if (j.contains("trace")) {
    const auto& t = j["trace"];
    reject_unknown(t, {"t", "h_max", "h_min"}, "trace");
    if (t.contains("t")) c.trace.t = read_grid(t["t"], "trace.t");
    if (t.contains("h_max") && !t["h_max"].is_null()) c.trace.h_max = get<double>(t, "h_max", "trace");
    if (t.contains("h_min") && !t["h_min"].is_null()) c.trace.h_min = get<double>(t, "h_min", "trace");
  }
  if (j.contains("ising_bound")) {
    const auto& b = j["ising_bound"];
    reject_unknown(b, {"exact_sizes", "bound_sizes"}, "ising_bound");
    if (b.contains("exact_sizes")) c.ising.exact_sizes = read_sizes(b["exact_sizes"], "ising_bound.exact_sizes");
    if (b.contains("bound_sizes")) c.ising.bound_sizes = read_sizes(b["bound_sizes"], "ising_bound.bound_sizes");
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (model.type != "ising" && model.type != "sk" && model.type != "pspin") {
    throw ConfigError("model.type must be 'ising', 'sk' or 'pspin'");
  }
  if (model.sizes.empty()) throw ConfigError("model.sizes is empty");
  if (max_spins < 1 || max_spins > 20) throw ConfigError("max_spins must lie in [1, 20]");
  const int min_size = model.type == "ising" ? 3 : (model.type == "pspin" ? model.order : 2);
  for (int n : model.sizes) {
    if (n < min_size) throw ConfigError("model size " + std::to_string(n) + " is too small for " + model.type);
    if (n > max_spins) {
      throw ConfigError("model size " + std::to_string(n) + " exceeds max_spins " + std::to_string(max_spins));
    }
  }
  if (model.type == "pspin" && model.order < 2) throw ConfigError("model.p must be at least 2");
  if (!(model.halfwidth() >= 0.0) || !std::isfinite(model.halfwidth())) {
    throw ConfigError("model.field_halfwidth must be finite and nonnegative");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and nonnegative");
  if (instances < 1) throw ConfigError("instances must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!(ipr_window_fraction > 0.0 && ipr_window_fraction <= 1.0)) {
    throw ConfigError("ipr_window.fraction must lie in (0, 1]");
  }
  auto check_grid = [](const std::vector<double>& g, const char* name) {
    for (double v : g) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " values must be finite and >= 0");
    }
  };
  check_grid(proposal.h, "proposal.h");
  check_grid(proposal.t, "proposal.t");
  check_grid(trace.t, "trace.t");
  if (proposal.h.empty()) throw ConfigError("proposal.h is empty");
  if (!proposal.long_time && proposal.t.empty()) throw ConfigError("finite-time proposals need proposal.t");
  if (proposal.kind == ProposalKind::EffectiveXY && model.type != "sk") {
    throw ConfigError("effective_xy proposals need an sk model");
  }
  for (int n : ising.exact_sizes) {
    if (n < 4 || n % 2 != 0) throw ConfigError("ising_bound sizes must be even and at least 4");
    if (n > max_spins) throw ConfigError("ising_bound.exact_sizes exceeds max_spins");
  }
  for (int n : ising.bound_sizes) {
    if (n < 4 || n % 2 != 0) throw ConfigError("ising_bound sizes must be even and at least 4");
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["model"] = {{"type", model.type}, {"sizes", model.sizes}, {"field_halfwidth", model.halfwidth()}};
  if (model.type == "pspin") j["model"]["p"] = model.order;
  j["beta"] = beta;
  j["proposal"] = {{"kind", harness::to_string(proposal.kind)},
                   {"h", proposal.h},
                   {"t_mode", proposal.long_time ? "long" : "finite"},
                   {"t", proposal.t}};
  j["instances"] = ensemble_size();
  j["base_seed"] = base_seed;
  j["cuts"] = cut_family_name(cuts);
  j["output_dir"] = output_dir.string();
  j["max_spins"] = max_spins;
  j["threads"] = threads;
  j["ipr_window"] = {{"fraction", ipr_window_fraction}};
  j["trace"] = {{"t", trace.t},
                {"h_max", trace.h_max ? json(*trace.h_max) : json(nullptr)},
                {"h_min", trace.h_min ? json(*trace.h_min) : json(nullptr)}};
  j["ising_bound"] = {{"exact_sizes", ising.exact_sizes}, {"bound_sizes", ising.bound_sizes}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

models::ClassicalModel make_model(const ExperimentConfig& c, int spins, std::uint64_t instance) {
  const models::DisorderSeed seed{c.base_seed, instance};
  if (c.model.type == "ising") return models::IsingChain{spins};
  if (c.model.type == "sk") return models::sample_sk(spins, seed, c.model.halfwidth());
  return models::sample_pspin(spins, c.model.order, seed, c.model.halfwidth());
}

ChainPoint evaluate_chain(const models::BoltzmannTable& boltzmann, const quench::ProposalMatrix& q) {
  ChainPoint p;
  p.chain = chain::metropolis_chain(boltzmann, q);
  p.db_residual = chain::detailed_balance_residual(p.chain);
  p.gap = chain::spectral_gap(p.chain);
  return p;
}

void run_ordered(std::size_t tasks, int threads, const std::function<Blocks(std::size_t)>& work,
                 const std::function<void(std::size_t, const Blocks&)>& sink,
                 const std::function<void(std::size_t, const std::string&)>& on_error) {
  using Result = std::variant<std::monostate, Blocks, std::string>;
  auto attempt = [&](std::size_t i) -> Result {
    try {
      return work(i);
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
  };
  auto deliver = [&](std::size_t i, Result& r) {
    if (auto* b = std::get_if<Blocks>(&r)) {
      sink(i, *b);
    } else {
      on_error(i, std::get<std::string>(r));
    }
  };

  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || tasks <= 1) {
    for (std::size_t i = 0; i < tasks; ++i) {
      auto r = attempt(i);
      deliver(i, r);
    }
    return;
  }

  std::vector<Result> results(tasks);
  std::mutex mutex;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, tasks); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks; i = next++) {
        auto r = attempt(i);
        {
          std::lock_guard lock(mutex);
          results[i] = std::move(r);
        }
        ready.notify_all();
      }
    });
  }
  for (std::size_t i = 0; i < tasks; ++i) {
    Result r;
    {
      std::unique_lock lock(mutex);
      ready.wait(lock, [&] { return !std::holds_alternative<std::monostate>(results[i]); });
      r = std::move(results[i]);
      results[i] = Blocks{};
    }
    deliver(i, r);
  }
  for (auto& t : pool) t.join();
}

RunSummary run_gap_grid(const ExperimentConfig& c, const SweepOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  c.validate();
  if ((options.ipr || options.ipr_vectors) && !spectral_kind(c.proposal.kind)) {
    throw ConfigError("IPR needs a quench or effective_xy proposal");
  }
  ensure_dir(c.output_dir);
  RunSummary summary;
  summary.command = options.gaps ? "gap-grid" : "ipr-scan";

  const auto points = settings(c);
  const std::size_t n_h = c.proposal.h.size();
  std::vector<Output> outputs;
  if (options.gaps) outputs.push_back(open_output(c, kGapsFile, kGapHeader, {1, 2}, points.size()));
  if (options.ipr) outputs.push_back(open_output(c, kIprFile, kIprHeader, {0, 1}, n_h));
  std::optional<std::size_t> vector_slot;
  if (options.ipr_vectors) {
    // A block holds 2^N rows per h.
    vector_slot = outputs.size();
    Output o;
    o.writer = std::make_unique<csv::BlockWriter>(
        c.output_dir / kIprVectorsFile, kIprVectorHeader, std::vector<std::size_t>{0, 1},
        [n_h](const std::string& key, std::size_t rows) {
          const int n = std::stoi(key.substr(0, key.find('|')));
          return rows == (n_h << n);
        });
    outputs.push_back(std::move(o));
  }

  const std::string name = c.model.type;
  auto work = [&](const Task& task) {
    const auto model = make_model(c, task.spins, task.instance);
    const Vector energies = models::energy_table(model, c.max_spins);
    const auto boltz = models::boltzmann(energies, c.beta);
    Blocks blocks(outputs.size());
    const auto n = std::to_string(task.spins);
    const auto inst = std::to_string(task.instance);

    if (!spectral_kind(c.proposal.kind)) {
      for (const auto& s : points) {
        quench::ProposalMatrix q;
        if (c.proposal.kind == ProposalKind::Uniform) {
          q = quench::uniform_proposal(task.spins);
        } else if (c.proposal.kind == ProposalKind::Local) {
          q = quench::local_proposal(task.spins);
        } else {
          q = quench::perturbative_local_proposal(energies, s.h);
        }
        blocks[0].push_back(gap_row(name, task.spins, task.instance, s.h, s.t_mode(), c.beta, evaluate_chain(boltz, q)));
      }
      return blocks;
    }

    const auto window = ipr_window(energies, c.ipr_window_fraction);
    for (double h : c.proposal.h) {
      const auto spectrum = quench_spectrum(c, model, energies, h);
      if (options.gaps) {
        if (c.proposal.long_time) {
          blocks[0].push_back(gap_row(name, task.spins, task.instance, h, "long", c.beta,
                                      evaluate_chain(boltz, quench::proposal_long_time(spectrum))));
        } else {
          for (double t : c.proposal.t) {
            blocks[0].push_back(gap_row(name, task.spins, task.instance, h, num(t), c.beta,
                                        evaluate_chain(boltz, quench::proposal_at_time(spectrum, t))));
          }
        }
      }
      if (options.ipr || options.ipr_vectors) {
        const Vector ipr = quench::ipr(spectrum);
        if (options.ipr) {
          const std::size_t slot = options.gaps ? 1 : 0;
          const double avg = quench::ipr_window_average(ipr, energies, window.lo, window.hi);
          blocks[slot].push_back({n, inst, num(h), num(window.lo), num(window.hi), std::to_string(window.count), num(avg)});
        }
        if (vector_slot) {
          for (Eigen::Index x = 0; x < ipr.size(); ++x) {
            blocks[*vector_slot].push_back({n, inst, num(h), std::to_string(x), num(energies(x)), num(ipr(x))});
          }
        }
      }
    }
    return blocks;
  };

  sweep(c, ensemble_tasks(c), outputs, work, summary);
  summary.wall_seconds = elapsed_since(start);
  return summary;
}

RunSummary run_ipr_scan(const ExperimentConfig& c, bool export_vectors) {
  SweepOptions o;
  o.gaps = false;
  o.ipr = true;
  o.ipr_vectors = export_vectors;
  auto s = run_gap_grid(c, o);
  s.command = "ipr-scan";
  return s;
}

SizeStats size_stats(int spins, std::vector<double> values) {
  if (values.empty()) throw PreconditionError("size_stats: no values for N = " + std::to_string(spins));
  SizeStats s;
  s.spins = spins;
  s.count = values.size();
  s.mean = mean_of(values);
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  s.median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  }
  return s;
}

ScalingFit fit_scaling(const std::vector<SizeStats>& sizes) {
  std::set<int> distinct;
  for (const auto& s : sizes) distinct.insert(s.spins);
  if (distinct.size() < 3) throw PreconditionError("fit_scaling needs at least three distinct N");
  ScalingFit fit;
  fit.sizes = sizes;
  fit.weighted = std::all_of(sizes.begin(), sizes.end(), [](const SizeStats& s) { return s.stderr_ > 0.0; });
  std::vector<double> x, y, w;
  for (const auto& s : sizes) {
    if (!(s.mean > 0.0)) {
      throw PreconditionError("fit_scaling: nonpositive mean at N = " + std::to_string(s.spins));
    }
    x.push_back(s.spins);
    y.push_back(std::log2(s.mean));
    const double sigma = s.stderr_ / (s.mean * std::log(2.0));
    w.push_back(fit.weighted ? 1.0 / (sigma * sigma) : 1.0);
  }
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  fit.k = -slope;
  fit.prefactor = my - slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.prefactor + slope * x[i]);
    rss += w[i] * r * r;
  }
  fit.residual = std::sqrt(rss / sw);
  return fit;
}

namespace {

/// Groups `value` by (h, N) over rows that pass `keep`, then fits each h.
std::vector<HFit> fit_by_h(const csv::Table& table, const std::string& value_column,
                           const std::function<bool(const Row&)>& keep) {
  const auto ch = table.column("h");
  const auto cn = table.column("N");
  const auto cv = table.column(value_column);
  std::map<double, std::map<int, std::vector<double>>> groups;
  for (const auto& r : table.rows) {
    if (!keep(r)) continue;
    groups[csv::parse_number(r[ch])][std::stoi(r[cn])].push_back(csv::parse_number(r[cv]));
  }
  std::vector<HFit> out;
  for (auto& [h, by_n] : groups) {
    std::vector<SizeStats> stats;
    for (auto& [n, values] : by_n) stats.push_back(size_stats(n, std::move(values)));
    if (stats.size() < 3) continue;
    if (std::any_of(stats.begin(), stats.end(), [](const SizeStats& s) { return !(s.mean > 0.0); })) continue;
    out.push_back({h, fit_scaling(stats)});
  }
  return out;
}

void write_fit_rows(std::ostream& out, const std::vector<HFit>& fits) {
  out << "h,k,prefactor,residual,weighted\n";
  for (const auto& f : fits) {
    out << num(f.h) << ',' << num(f.fit.k) << ',' << num(f.fit.prefactor) << ',' << num(f.fit.residual) << ','
        << (f.fit.weighted ? 1 : 0) << '\n';
  }
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n > 0 ? n - 1 : 0;
}

}  // namespace

std::vector<HFit> fit_gap_table(const csv::Table& gaps) {
  const auto ct = gaps.column("t_mode");
  return fit_by_h(gaps, "delta", [ct](const Row& r) { return r[ct] == "long"; });
}

std::vector<HFit> fit_ipr_table(const csv::Table& ipr) {
  return fit_by_h(ipr, "window_ipr", [](const Row&) { return true; });
}

RunSummary run_fit(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.command = "fit";
  ensure_dir(c.output_dir);
  const auto gaps_path = c.output_dir / kGapsFile;
  const auto ipr_path = c.output_dir / kIprFile;
  if (!std::filesystem::exists(gaps_path) && !std::filesystem::exists(ipr_path)) {
    throw ConfigError("nothing to fit: neither gaps.csv nor ipr.csv in " + c.output_dir.string());
  }
  if (std::filesystem::exists(gaps_path)) {
    const auto table = csv::read(gaps_path);
    const auto ch = table.column("h");
    const auto cn = table.column("N");
    const auto ct = table.column("t_mode");
    const auto cd = table.column("delta");
    std::map<std::pair<double, int>, std::vector<double>> groups;
    for (const auto& r : table.rows) {
      if (r[ct] != "long") continue;
      groups[{csv::parse_number(r[ch]), std::stoi(r[cn])}].push_back(csv::parse_number(r[cd]));
    }
    {
      std::ofstream out(c.output_dir / kGapSummaryFile);
      out << "h,N,count,mean_delta,median_delta,stderr\n";
      for (auto& [key, values] : groups) {
        const auto s = size_stats(key.second, values);
        out << num(key.first) << ',' << key.second << ',' << s.count << ',' << num(s.mean) << ',' << num(s.median)
            << ',' << num(s.stderr_) << '\n';
      }
    }
    const auto fits = fit_gap_table(table);
    std::ofstream out(c.output_dir / kGapFitsFile);
    write_fit_rows(out, fits);
    summary.rows[kGapSummaryFile] = groups.size();
    summary.rows[kGapFitsFile] = fits.size();
  }
  if (std::filesystem::exists(ipr_path)) {
    const auto fits = fit_ipr_table(csv::read(ipr_path));
    std::ofstream out(c.output_dir / kIprFitsFile);
    write_fit_rows(out, fits);
    summary.rows[kIprFitsFile] = fits.size();
  }
  summary.wall_seconds = elapsed_since(start);
  return summary;
}

BaselineFits fit_baselines(const csv::Table& table) {
  const auto cs = table.column("strategy");
  const auto cn = table.column("N");
  const auto cd = table.column("delta");
  std::map<std::string, std::map<int, std::vector<double>>> groups;
  for (const auto& r : table.rows) groups[r[cs]][std::stoi(r[cn])].push_back(csv::parse_number(r[cd]));
  auto stats_of = [&](const std::string& strategy, bool times_n) {
    std::vector<SizeStats> out;
    for (auto& [n, values] : groups[strategy]) {
      auto s = size_stats(n, values);
      if (times_n) {
        s.mean *= n;
        s.median *= n;
        s.stderr_ *= n;
      }
      out.push_back(s);
    }
    return out;
  };
  BaselineFits f;
  auto attempt = [&](const char* label, const std::string& strategy, bool times_n) -> std::optional<ScalingFit> {
    try {
      return fit_scaling(stats_of(strategy, times_n));
    } catch (const PreconditionError& e) {
      f.errors.push_back(std::string(label) + ": " + e.what());
      return std::nullopt;
    }
  };
  f.uniform = attempt("k_uniform", "uniform", false);
  f.local = attempt("k_local", "local", false);
  f.local_times_n = attempt("k_local_times_n", "local", true);
  return f;
}

RunSummary classical_baselines(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  c.validate();
  ensure_dir(c.output_dir);
  RunSummary summary;
  summary.command = "baselines";
  std::vector<Output> outputs;
  outputs.push_back(open_output(c, kBaselinesFile, kBaselineHeader, {1, 2}, 2));
  auto work = [&](const Task& task) {
    const auto model = make_model(c, task.spins, task.instance);
    const auto boltz = models::boltzmann(models::energy_table(model, c.max_spins), c.beta);
    Blocks blocks(1);
    for (const char* strategy : {"uniform", "local"}) {
      const auto q = std::string(strategy) == "uniform" ? quench::uniform_proposal(task.spins)
                                                         : quench::local_proposal(task.spins);
      const auto p = evaluate_chain(boltz, q);
      blocks[0].push_back({c.model.type, std::to_string(task.spins), std::to_string(task.instance), strategy,
                           num(c.beta), num(p.gap.delta), num(p.gap.lambda2_abs), p.gap.reducible ? "1" : "0",
                           num(p.db_residual)});
    }
    return blocks;
  };
  sweep(c, ensemble_tasks(c), outputs, work, summary);

  std::set<int> distinct(c.model.sizes.begin(), c.model.sizes.end());
  if (distinct.size() >= 3) {
    try {
      const auto fits = fit_baselines(csv::read(c.output_dir / kBaselinesFile));
      std::ofstream out(c.output_dir / kBaselineFitsFile);
      out << "label,k,prefactor,residual,weighted\n";
      auto line = [&](const char* label, const std::optional<ScalingFit>& f) {
        if (!f) {
          out << label << ",nan,nan,nan,0\n";
          return;
        }
        out << label << ',' << num(f->k) << ',' << num(f->prefactor) << ',' << num(f->residual) << ','
            << (f->weighted ? 1 : 0) << '\n';
      };
      line("k_uniform", fits.uniform);
      line("k_local", fits.local);
      line("k_local_times_n", fits.local_times_n);
      summary.rows[kBaselineFitsFile] = 3;
      if (!fits.errors.empty()) summary.notes["unfitted"] = fits.errors;
    } catch (const Error& e) {
      summary.failures.push_back(std::string("baseline fit: ") + e.what());
    }
  }
  summary.wall_seconds = elapsed_since(start);
  return summary;
}

RunSummary run_time_trace(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  c.validate();
  if (!spectral_kind(c.proposal.kind)) throw ConfigError("time traces need a quench proposal");
  ensure_dir(c.output_dir);
  RunSummary summary;
  summary.command = "time-trace";

  double h_max = 0.0;
  double h_min = 0.0;
  if (c.trace.h_max && c.trace.h_min) {
    h_max = *c.trace.h_max;
    h_min = *c.trace.h_min;
  } else {
    // Long-time mean gap over the h grid at the largest size.
    const int n = *std::max_element(c.model.sizes.begin(), c.model.sizes.end());
    std::vector<double> mean(c.proposal.h.size(), 0.0);
    for (int i = 0; i < c.ensemble_size(); ++i) {
      const auto model = make_model(c, n, static_cast<std::uint64_t>(i));
      const Vector energies = models::energy_table(model, c.max_spins);
      const auto boltz = models::boltzmann(energies, c.beta);
      for (std::size_t k = 0; k < c.proposal.h.size(); ++k) {
        const auto s = quench_spectrum(c, model, energies, c.proposal.h[k]);
        mean[k] += evaluate_chain(boltz, quench::proposal_long_time(s)).gap.delta / c.ensemble_size();
      }
    }
    const auto hi = std::max_element(mean.begin(), mean.end()) - mean.begin();
    const auto lo = std::min_element(mean.begin(), mean.end()) - mean.begin();
    h_max = c.trace.h_max.value_or(c.proposal.h[static_cast<std::size_t>(hi)]);
    h_min = c.trace.h_min.value_or(c.proposal.h[static_cast<std::size_t>(lo)]);
  }
  summary.notes = {{"h_max", h_max}, {"h_min", h_min}};

  const Row header{"role", "model", "N", "instance", "h", "t_mode", "beta", "delta", "lambda2", "reducible", "db_residual"};
  std::vector<Output> outputs;
  outputs.push_back(open_output(c, kTraceFile, header, {2, 3}, 2 * (c.trace.t.size() + 1)));
  auto work = [&](const Task& task) {
    const auto model = make_model(c, task.spins, task.instance);
    const Vector energies = models::energy_table(model, c.max_spins);
    const auto boltz = models::boltzmann(energies, c.beta);
    Blocks blocks(1);
    for (const auto& [role, h] : {std::pair{"h_max", h_max}, std::pair{"h_min", h_min}}) {
      const auto s = quench_spectrum(c, model, energies, h);
      auto row = [&](const std::string& mode, const ChainPoint& p) {
        Row r = gap_row(c.model.type, task.spins, task.instance, h, mode, c.beta, p);
        r.insert(r.begin(), role);
        blocks[0].push_back(std::move(r));
      };
      row("long", evaluate_chain(boltz, quench::proposal_long_time(s)));
      for (double t : c.trace.t) row(num(t), evaluate_chain(boltz, quench::proposal_at_time(s, t)));
    }
    return blocks;
  };
  sweep(c, ensemble_tasks(c), outputs, work, summary);

  const auto table = csv::read(c.output_dir / kTraceFile);
  const auto cr = table.column("role");
  const auto cn = table.column("N");
  const auto ch = table.column("h");
  const auto ct = table.column("t_mode");
  const auto cd = table.column("delta");
  std::map<std::tuple<std::string, int, std::string>, std::pair<std::string, std::vector<double>>> groups;
  std::vector<std::tuple<std::string, int, std::string>> order;
  for (const auto& r : table.rows) {
    auto key = std::make_tuple(r[cr], std::stoi(r[cn]), r[ct]);
    auto [it, inserted] = groups.try_emplace(key, r[ch], std::vector<double>{});
    if (inserted) order.push_back(key);
    it->second.second.push_back(csv::parse_number(r[cd]));
  }
  std::ofstream out(c.output_dir / kTraceSummaryFile);
  out << "role,h,N,t_mode,count,mean_delta,stderr\n";
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    const auto& ta = std::get<2>(a);
    const auto& tb = std::get<2>(b);
    if ((ta == "long") != (tb == "long")) return ta == "long";
    if (ta == "long") return false;
    return csv::parse_number(ta) < csv::parse_number(tb);
  });
  for (const auto& key : order) {
    const auto& [h, values] = groups[key];
    const auto s = size_stats(std::get<1>(key), values);
    out << std::get<0>(key) << ',' << h << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << s.count << ','
        << num(s.mean) << ',' << num(s.stderr_) << '\n';
  }
  summary.rows[kTraceSummaryFile] = order.size();
  summary.wall_seconds = elapsed_since(start);
  return summary;
}

RunSummary run_ising_bound(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  c.validate();
  ensure_dir(c.output_dir);
  RunSummary summary;
  summary.command = "ising-bound";

  std::vector<ising::TimeMode> modes;
  if (c.proposal.long_time) {
    modes.emplace_back(ising::LongTime{});
  } else {
    for (double t : c.proposal.t) modes.emplace_back(ising::FiniteTime{t});
  }
  auto t_of = [](const ising::TimeMode& m) {
    const auto* f = std::get_if<ising::FiniteTime>(&m);
    return f ? f->t : std::numeric_limits<double>::infinity();
  };
  auto bound_total = [&](int n, double h, const ising::TimeMode& m) {
    return ising::bound_finite_n(n, h, m, c.beta).total();
  };

  // Exact gaps, one block per size.
  std::vector<Output> outputs;
  outputs.push_back(open_output(c, kIsingExactFile, kIsingExactHeader, {0}, c.proposal.h.size() * modes.size()));
  std::vector<Task> tasks;
  for (int n : c.ising.exact_sizes) tasks.push_back({n, 0});
  auto work = [&](const Task& task) {
    const Vector energies = models::energy_table(models::IsingChain{task.spins}, c.max_spins);
    const auto boltz = models::boltzmann(energies, c.beta);
    Blocks blocks(1);
    for (double h : c.proposal.h) {
      const auto s = quench::diagonalize(quench::build_hamiltonian(energies, h, c.max_spins));
      for (const auto& m : modes) {
        const auto q = std::holds_alternative<ising::LongTime>(m) ? quench::proposal_long_time(s)
                                                                   : quench::proposal_at_time(s, t_of(m));
        const auto p = evaluate_chain(boltz, q);
        blocks[0].push_back({std::to_string(task.spins), num(h), ising::mode_name(m), num(t_of(m)), num(c.beta),
                             num(p.gap.delta), num(p.gap.lambda2_abs), p.gap.reducible ? "1" : "0",
                             num(p.db_residual), num(bound_total(task.spins, h, m))});
      }
    }
    return blocks;
  };
  // Exact-size keys are the size alone.
  std::vector<Task> pending;
  for (const auto& t : tasks) {
    if (outputs[0].writer->has(std::to_string(t.spins))) {
      ++summary.skipped;
    } else {
      pending.push_back(t);
    }
  }
  summary.tasks += tasks.size();
  run_ordered(
      pending.size(), c.threads, [&](std::size_t i) { return work(pending[i]); },
      [&](std::size_t, const Blocks& b) { outputs[0].writer->write_block(b[0]); },
      [&](std::size_t i, const std::string& what) {
        summary.failures.push_back("N=" + std::to_string(pending[i].spins) + ": " + what);
      });
  summary.rows[kIsingExactFile] = outputs[0].writer->row_count();

  // Analytic bounds are cheap and rewritten in full.
  std::ofstream out(c.output_dir / kIsingBoundFile);
  out << csv::join(kIsingBoundHeader) << '\n';
  std::size_t rows = 0;
  for (int n : c.ising.bound_sizes) {
    std::ofstream grid;
    if (!c.proposal.long_time) {
      grid.open(c.output_dir / ("bound_grid_N" + std::to_string(n) + ".csv"));
      grid << "h,t,bound\n";
    }
    for (double h : c.proposal.h) {
      for (const auto& m : modes) {
        try {
          for (const auto& r : {ising::bound_finite_n(n, h, m, c.beta), ising::bound_asymptotic(n, h, m, c.beta)}) {
            const double first_log = r.first.zero ? -std::numeric_limits<double>::infinity() : r.first.log;
            out << n << ',' << num(h) << ',' << r.mode << ',' << num(t_of(m)) << ',' << num(c.beta) << ','
                << num(first_log) << ',' << num(r.second) << ',' << num(r.total()) << '\n';
            ++rows;
            if (grid.is_open() && r.mode != "asymptotic") grid << num(h) << ',' << num(t_of(m)) << ',' << num(r.total()) << '\n';
          }
        } catch (const Error& e) {
          summary.failures.push_back("bound N=" + std::to_string(n) + " h=" + num(h) + ": " + e.what());
        }
      }
    }
  }
  summary.rows[kIsingBoundFile] = rows;
  summary.wall_seconds = elapsed_since(start);
  return summary;
}

RunSummary run_cuts(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  c.validate();
  if (c.cuts == CutFamily::None) throw ConfigError("cuts is 'none'; nothing to compute");
  if (c.proposal.kind != ProposalKind::Quench || !c.proposal.long_time) {
    throw ConfigError("bound ladders need long-time quench proposals");
  }
  if (!(c.beta > 0.0)) throw ConfigError("bound ladders need beta > 0");
  ensure_dir(c.output_dir);
  RunSummary summary;
  summary.command = "cuts";

  // Rows per task depend on the disorder, so accept any block on resume.
  std::vector<Output> outputs(1);
  outputs[0].writer = std::make_unique<csv::BlockWriter>(c.output_dir / kBoundsFile, kBoundHeader,
                                                         std::vector<std::size_t>{0, 1},
                                                         [](const std::string&, std::size_t) { return true; });
  auto work = [&](const Task& task) {
    const auto model = make_model(c, task.spins, task.instance);
    const Vector energies = models::energy_table(model, c.max_spins);
    const auto boltz = models::boltzmann(energies, c.beta);
    const auto cuts = bottleneck::energy_threshold_cuts(energies, boltz.pi);
    Blocks blocks(1);
    for (double h : c.proposal.h) {
      const auto s = quench::diagonalize(quench::build_hamiltonian(energies, h, c.max_spins));
      const auto point = evaluate_chain(boltz, quench::proposal_long_time(s));
      const Vector ipr = quench::ipr(s);
      std::vector<const bottleneck::Cut*> chosen;
      if (c.cuts == CutFamily::Best) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& cut : cuts) {
          const double l = bottleneck::conductance(point.chain, cut);
          if (l < best) {
            best = l;
            chosen.assign(1, &cut);
          }
        }
      } else {
        for (const auto& cut : cuts) chosen.push_back(&cut);
      }
      for (const auto* cut : chosen) {
        const auto r = bottleneck::bound_ladder(s, boltz, *cut, ipr, point.chain);
        blocks[0].push_back({std::to_string(task.spins), std::to_string(task.instance), num(h), num(c.beta),
                             num(cut->threshold.value_or(NAN)), num(point.gap.delta), num(r.lambda_b),
                             num(r.fg_value), num(r.cs_bound), num(r.ipr_bound), num(r.free_energy_bound),
                             num(r.entropy_f), num(r.entropy_g), num(r.mean_complement_energy)});
      }
    }
    return blocks;
  };
  sweep(c, ensemble_tasks(c), outputs, work, summary);
  summary.wall_seconds = elapsed_since(start);
  return summary;
}

std::string version() { return "0.1.0"; }

void write_run_metadata(const ExperimentConfig& c, const RunSummary& summary) {
  ensure_dir(c.output_dir);
  {
    std::ofstream out(c.output_dir / "config.resolved.json");
    out << c.to_json().dump(2) << '\n';
  }
  json rows = json::object();
  for (const auto& [file, n] : summary.rows) rows[file] = n;
  for (const auto& entry : std::filesystem::directory_iterator(c.output_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".csv" && !rows.contains(name)) rows[name] = count_lines(entry.path());
  }
  json manifest = {
      {"command", summary.command},
      {"rows", rows},
      {"tasks", summary.tasks},
      {"skipped", summary.skipped},
      {"failures", summary.failures},
      {"wall_seconds", summary.wall_seconds},
      {"threads", c.threads},
      {"versions",
       {{"qmcmc", version()},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
  };
  if (!summary.notes.is_null()) manifest["notes"] = summary.notes;
  std::ofstream out(c.output_dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

}  // namespace qmcmc::harness

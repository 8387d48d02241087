#include "qmcmc/bottleneck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qmcmc/error.hpp"

namespace qmcmc::bottleneck {
namespace {

constexpr double kReversibleTol = 1e-9;

void require_reversible(const chain::TransitionMatrix& chain) {
  const double residual = chain::detailed_balance_residual(chain);
  if (residual > kReversibleTol) {
    throw DetailedBalanceError("bottleneck bounds need a reversible chain", residual);
  }
}

void require_matching(const chain::TransitionMatrix& chain, const Cut& cut) {
  if (chain.dimension() != cut.dimension() || chain.pi.size() != cut.dimension()) {
    throw DimensionError("cut and chain differ in dimension");
  }
}

double flow(const chain::TransitionMatrix& chain, const std::vector<char>& in_s) {
  const Eigen::Index dim = chain.dimension();
  double total = 0.0;
  for (Eigen::Index y = 0; y < dim; ++y) {
    if (in_s[static_cast<std::size_t>(y)]) continue;
    for (Eigen::Index x = 0; x < dim; ++x) {
      if (in_s[static_cast<std::size_t>(x)]) total += chain.pi(x) * chain.p(x, y);
    }
  }
  return total;
}

}  // namespace

Cut::Cut(std::vector<char> members, const Vector& pi) : members_(std::move(members)) {
  if (static_cast<Eigen::Index>(members_.size()) != pi.size()) {
    throw DimensionError("cut indicator and distribution differ in size");
  }
  for (std::size_t x = 0; x < members_.size(); ++x) {
    if (members_[x]) {
      ++size_;
      weight_ += pi(static_cast<Eigen::Index>(x));
    }
  }
  if (size_ == 0 || size_ == pi.size()) throw PreconditionError("a cut must be a proper nonempty subset");
}

double equilibrium_flow(const chain::TransitionMatrix& chain, const Cut& cut) {
  require_matching(chain, cut);
  return flow(chain, cut.members());
}

double conductance(const chain::TransitionMatrix& chain, const Cut& cut) {
  require_matching(chain, cut);
  require_reversible(chain);
  const double w = cut.weight();
  return flow(chain, cut.members()) / (w * (1.0 - w));
}

std::vector<Cut> energy_threshold_cuts(const Vector& energies, const Vector& pi) {
  if (energies.size() != pi.size()) throw DimensionError("energies and pi differ in size");
  const Eigen::Index dim = energies.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(dim));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return energies(a) > energies(b); });
  const double tie_tol = 1e-12 * std::max(1.0, energies.maxCoeff() - energies.minCoeff());

  std::vector<Cut> cuts;
  std::vector<char> members(static_cast<std::size_t>(dim), 0);
  double weight = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double level = energies(order[i]);
    std::size_t j = i;
    while (j < order.size() && level - energies(order[j]) <= tie_tol) {
      members[static_cast<std::size_t>(order[j])] = 1;
      weight += pi(order[j]);
      ++j;
    }
    if (j == order.size() || weight > 0.5) break;
    Cut cut(members, pi);
    cut.threshold = energies(order[j - 1]);
    cuts.push_back(std::move(cut));
    i = j;
  }
  return cuts;
}

CutMinimum min_conductance_over_thresholds(const chain::TransitionMatrix& chain, const Vector& energies) {
  auto cuts = energy_threshold_cuts(energies, chain.pi);
  if (cuts.empty()) throw PreconditionError("no energy-threshold cut with pi(B) <= 1/2");
  std::optional<CutMinimum> best;
  for (auto& cut : cuts) {
    const double lambda = conductance(chain, cut);
    if (!best || lambda < best->conductance) best = CutMinimum{std::move(cut), lambda};
  }
  return *best;
}

double brute_force_min_cut(const chain::TransitionMatrix& chain) {
  const Eigen::Index dim = chain.dimension();
  if (dim > 16) throw DimensionError("brute_force_min_cut enumerates subsets only for N <= 4");
  require_reversible(chain);
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> members(static_cast<std::size_t>(dim));
  const std::uint32_t full = (1U << dim) - 1U;
  for (std::uint32_t subset = 1; subset < full; ++subset) {
    double w = 0.0;
    for (Eigen::Index x = 0; x < dim; ++x) {
      members[static_cast<std::size_t>(x)] = static_cast<char>((subset >> x) & 1U);
      if (members[static_cast<std::size_t>(x)]) w += chain.pi(x);
    }
    if (w > 0.5) continue;
    best = std::min(best, flow(chain, members) / (w * (1.0 - w)));
  }
  if (!std::isfinite(best)) throw PreconditionError("no subset with pi(S) <= 1/2");
  return best;
}

FgDistributions fg_distributions(const quench::Spectrum& spectrum, const models::BoltzmannTable& boltzmann,
                                 const Cut& cut) {
  const Eigen::Index dim = spectrum.dimension();
  if (boltzmann.pi.size() != dim || cut.dimension() != dim) throw DimensionError("fg: dimensions differ");
  double lowest_in_b = std::numeric_limits<double>::infinity();
  double highest_outside = -std::numeric_limits<double>::infinity();
  for (Eigen::Index x = 0; x < dim; ++x) {
    if (cut.contains(x)) {
      lowest_in_b = std::min(lowest_in_b, boltzmann.energies(x));
    } else {
      highest_outside = std::max(highest_outside, boltzmann.energies(x));
    }
  }
  if (!(lowest_in_b > highest_outside)) {
    throw PreconditionError("fg_distributions: B must lie strictly above B^c in energy");
  }

  Vector weight_b = Vector::Zero(dim);
  Vector weight_c = Vector::Zero(dim);
  double pi_c = 0.0;
  const double complement_size = static_cast<double>(dim - cut.size());
  for (Eigen::Index x = 0; x < dim; ++x) {
    if (cut.contains(x)) {
      weight_b(x) = boltzmann.pi(x) / cut.weight();
    } else {
      weight_c(x) = 1.0 / complement_size;
      pi_c += boltzmann.pi(x);
    }
  }
  const Matrix populations = spectrum.vectors.cwiseAbs2();
  FgDistributions out;
  out.f = populations.transpose() * weight_b;
  out.g = populations.transpose() * weight_c;
  out.pi_bar_complement = pi_c / complement_size;
  return out;
}

BoundReport bound_ladder(const quench::Spectrum& spectrum, const models::BoltzmannTable& boltzmann,
                         const Cut& cut, const Vector& ipr_values, const chain::TransitionMatrix& chain) {
  if (!(boltzmann.beta > 0.0)) throw PreconditionError("bound_ladder needs beta > 0");
  auto fg = fg_distributions(spectrum, boltzmann, cut);
  const Eigen::Index dim = spectrum.dimension();
  if (ipr_values.size() != dim) throw DimensionError("bound_ladder: IPR vector has wrong size");

  BoundReport r;
  r.pi_bar_complement = fg.pi_bar_complement;
  const double prefactor = 1.0 / fg.pi_bar_complement;
  const double purity_f = fg.f.squaredNorm();
  const double purity_g = fg.g.squaredNorm();
  r.fg_value = prefactor * fg.f.dot(fg.g);
  r.cs_bound = prefactor * std::sqrt(purity_f * purity_g);

  double ipr_b = 0.0;
  double ipr_c = 0.0;
  double energy_c = 0.0;
  const double complement_size = static_cast<double>(dim - cut.size());
  for (Eigen::Index x = 0; x < dim; ++x) {
    if (cut.contains(x)) {
      ipr_b += boltzmann.pi(x) / cut.weight() * ipr_values(x);
    } else {
      ipr_c += ipr_values(x) / complement_size;
      energy_c += boltzmann.energies(x) / complement_size;
    }
  }
  r.ipr_bound = prefactor * std::sqrt(ipr_b * ipr_c);

  r.entropy_f = -std::log(purity_f);
  r.entropy_g = -std::log(purity_g);
  r.mean_complement_energy = energy_c;
  r.free_energy = boltzmann.free_energy;
  r.transition_free_energy = energy_c - (r.entropy_f + r.entropy_g) / (2.0 * boltzmann.beta);
  r.free_energy_bound = std::exp(-boltzmann.beta * (r.free_energy - r.transition_free_energy));

  r.lambda_b = conductance(chain, cut);
  r.equality_discrepancy = r.lambda_b > 0.0 ? std::abs(r.lambda_b - r.fg_value) / r.lambda_b
                                            : std::abs(r.fg_value);
  r.f = std::move(fg.f);
  r.g = std::move(fg.g);
  return r;
}

}  // namespace qmcmc::bottleneck

#pragma once

#include <optional>
#include <vector>

#include "qmcmc/chain.hpp"
#include "qmcmc/models.hpp"
#include "qmcmc/quench.hpp"

namespace qmcmc::bottleneck {

/// A proper, nonempty subset S of the configuration space.
class Cut {
 public:
  Cut(std::vector<char> members, const Vector& pi);

  bool contains(Eigen::Index x) const { return members_[static_cast<std::size_t>(x)] != 0; }
  Eigen::Index dimension() const { return static_cast<Eigen::Index>(members_.size()); }
  Eigen::Index size() const { return size_; }
  double weight() const { return weight_; }  // pi(S)
  const std::vector<char>& members() const { return members_; }

  /// Energy threshold that produced this cut, if any.
  std::optional<double> threshold;

 private:
  std::vector<char> members_;
  Eigen::Index size_ = 0;
  double weight_ = 0.0;
};

/// E(S, S^c) = sum_{x in S, y not in S} pi(x) P(x, y).
double equilibrium_flow(const chain::TransitionMatrix& chain, const Cut& cut);

/// Lambda(S) = E(S, S^c) / (pi(S) pi(S^c)); an upper bound on the spectral gap
/// for any S. Refuses chains that are not reversible.
double conductance(const chain::TransitionMatrix& chain, const Cut& cut);

/// Superlevel sets B = {x : H(x) >= threshold}, one per distinct energy, in
/// order of decreasing threshold while pi(B) <= 1/2. Equal energies (within
/// 1e-12 of the energy range) always land on the same side.
std::vector<Cut> energy_threshold_cuts(const Vector& energies, const Vector& pi);

struct CutMinimum {
  Cut cut;
  double conductance;
};

CutMinimum min_conductance_over_thresholds(const chain::TransitionMatrix& chain, const Vector& energies);

/// Exact minimum of Lambda over every S with pi(S) <= 1/2. N <= 4 only.
double brute_force_min_cut(const chain::TransitionMatrix& chain);

struct FgDistributions {
  Vector f;  // sum_{x in B} pi_B(x) |<x|n>|^2
  Vector g;  // |B^c|^{-1} sum_{y in B^c} |<n|y>|^2
  double pi_bar_complement = 0.0;  // mean of pi over B^c
};

/// Requires every state of B to lie strictly above every state of B^c in energy.
FgDistributions fg_distributions(const quench::Spectrum& spectrum, const models::BoltzmannTable& boltzmann,
                                 const Cut& cut);

struct BoundReport {
  double lambda_b = 0.0;          // conductance of the supplied chain across B
  double fg_value = 0.0;          // sum_n f g / pi_bar(B^c)
  double cs_bound = 0.0;          // Cauchy-Schwarz on fg_value
  double ipr_bound = 0.0;
  double free_energy_bound = 0.0; // e^{-beta (F_beta - F_c)}
  double pi_bar_complement = 0.0;
  double entropy_f = 0.0;         // Renyi-2, nats
  double entropy_g = 0.0;
  double mean_complement_energy = 0.0;  // E_c
  double transition_free_energy = 0.0;  // F_c = E_c - T (S_f + S_g) / 2
  double free_energy = 0.0;             // F_beta
  /// |lambda_b - fg_value| / lambda_b. Zero whenever the chain's proposal is the
  /// non-degenerate long-time form built from `spectrum`.
  double equality_discrepancy = 0.0;
  Vector f;
  Vector g;
};

BoundReport bound_ladder(const quench::Spectrum& spectrum, const models::BoltzmannTable& boltzmann,
                         const Cut& cut, const Vector& ipr_values, const chain::TransitionMatrix& chain);

}  // namespace qmcmc::bottleneck

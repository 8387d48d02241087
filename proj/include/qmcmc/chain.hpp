#pragma once

#include <cstdint>
#include <span>

#include "qmcmc/linalg.hpp"
#include "qmcmc/models.hpp"
#include "qmcmc/quench.hpp"

namespace qmcmc::chain {

/// Row-stochastic P with P(y, x) the probability of moving y -> x.
struct TransitionMatrix {
  Matrix p;
  Vector pi;

  Eigen::Index dimension() const { return p.rows(); }
};

/// A(x|y) = min(1, e^{-beta (H(x) - H(y))} Q(y|x) / Q(x|y)), stored at (y, x).
/// Entries with Q(x|y) = 0 are 0.
Matrix metropolis_acceptance(const models::BoltzmannTable& boltzmann, const quench::ProposalMatrix& q);

/// Off-diagonal P(y,x) = Q(x|y) A(x|y); the diagonal takes the rejected mass.
TransitionMatrix transition_matrix(const quench::ProposalMatrix& q, const Matrix& acceptance, const Vector& pi);

/// Proposal followed by Metropolis-Hastings acceptance.
TransitionMatrix metropolis_chain(const models::BoltzmannTable& boltzmann, const quench::ProposalMatrix& q);

/// max over pairs of |pi(x)P(x,y) - pi(y)P(y,x)| / max(pi(x)P(x,y), pi(y)P(y,x)).
double detailed_balance_residual(const TransitionMatrix& chain);

struct GapResult {
  double delta = 0.0;         // 1 - |lambda_2|
  double lambda2_abs = 1.0;   // second largest eigenvalue modulus
  bool reducible = false;     // eigenvalue 1 has multiplicity > 1
};

/// Spectral gap from the symmetrised matrix D^{1/2} P D^{-1/2}.
/// Throws DetailedBalanceError if P is not reversible with respect to pi.
GapResult spectral_gap(const TransitionMatrix& chain);

inline constexpr double kReducibilityTol = 1e-10;

struct MixingBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// (1/delta - 1) ln(1/(2 eps)) <= t_mix <= (1/delta) ln(1/(eps pi_min)).
/// delta == 0 yields +inf for both.
MixingBounds mixing_time_bounds(double delta, double pi_min, double eps);

/// Smallest s with max_{x0} TV(P^s(x0, .), pi) <= eps. Throws NumericalError
/// when not reached within `max_steps`.
std::int64_t exact_mixing_time(const TransitionMatrix& chain, double eps, std::int64_t max_steps = 1'000'000);

/// Worst-case total variation distance of the rows of `m` from pi.
double max_tv_distance(const Matrix& m, const Vector& pi);

/// Entrywise mean of chains sharing one stationary distribution.
TransitionMatrix time_averaged_transition(std::span<const TransitionMatrix> chains);

}  // namespace qmcmc::chain

#include "qmcmc/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "qmcmc/error.hpp"

namespace qmcmc::chain {
namespace {

// Relative tolerance for accepting a chain as reversible before symmetrising.
constexpr double kReversibleTol = 1e-9;

void require_same_shape(const Matrix& a, const Vector& pi, const char* who) {
  if (a.rows() != a.cols() || a.rows() != pi.size()) {
    throw DimensionError(std::string(who) + ": matrix and stationary distribution differ in size");
  }
}

}  // namespace

Matrix metropolis_acceptance(const models::BoltzmannTable& boltzmann, const quench::ProposalMatrix& q) {
  const Eigen::Index dim = q.dimension();
  if (boltzmann.energies.size() != dim) throw DimensionError("acceptance: proposal and energy table differ in size");
  const double beta = boltzmann.beta;
  const Vector& e = boltzmann.energies;
  Matrix a = Matrix::Zero(dim, dim);
  for (Eigen::Index x = 0; x < dim; ++x) {
    for (Eigen::Index y = 0; y < dim; ++y) {
      const double forward = q.q(y, x);  // Q(x|y)
      if (x == y) {
        a(y, x) = 1.0;
        continue;
      }
      if (forward <= 0.0) continue;
      const double backward = q.q(x, y);  // Q(y|x)
      const double boltz = std::exp(-beta * (e(x) - e(y)));
      const double ratio = backward == forward ? boltz : boltz * backward / forward;
      a(y, x) = std::min(1.0, ratio);
    }
  }
  return a;
}

TransitionMatrix transition_matrix(const quench::ProposalMatrix& q, const Matrix& acceptance, const Vector& pi) {
  const Eigen::Index dim = q.dimension();
  if (acceptance.rows() != dim || acceptance.cols() != dim || pi.size() != dim) {
    throw DimensionError("transition_matrix: shapes do not match");
  }
  TransitionMatrix t;
  t.pi = pi;
  t.p = q.q.cwiseProduct(acceptance);
  for (Eigen::Index y = 0; y < dim; ++y) {
    t.p(y, y) = 0.0;
    const double stay = 1.0 - t.p.row(y).sum();
    if (stay < -1e-12) {
      std::ostringstream msg;
      msg << "transition_matrix: negative holding probability " << stay << " in row " << y;
      throw NumericalError(msg.str());
    }
    t.p(y, y) = std::max(stay, 0.0);
  }
  return t;
}

TransitionMatrix metropolis_chain(const models::BoltzmannTable& boltzmann, const quench::ProposalMatrix& q) {
  return transition_matrix(q, metropolis_acceptance(boltzmann, q), boltzmann.pi);
}

double detailed_balance_residual(const TransitionMatrix& chain) {
  require_same_shape(chain.p, chain.pi, "detailed_balance_residual");
  const Eigen::Index dim = chain.dimension();
  double worst = 0.0;
  for (Eigen::Index x = 0; x < dim; ++x) {
    for (Eigen::Index y = x + 1; y < dim; ++y) {
      const double forward = chain.pi(x) * chain.p(x, y);
      const double backward = chain.pi(y) * chain.p(y, x);
      const double scale = std::max(forward, backward);
      if (scale <= 0.0) continue;
      worst = std::max(worst, std::abs(forward - backward) / scale);
    }
  }
  return worst;
}

GapResult spectral_gap(const TransitionMatrix& chain) {
  require_same_shape(chain.p, chain.pi, "spectral_gap");
  const double residual = detailed_balance_residual(chain);
  if (residual > kReversibleTol) {
    std::ostringstream msg;
    msg << "spectral_gap: chain violates detailed balance (relative residual " << residual << ")";
    throw DetailedBalanceError(msg.str(), residual);
  }
  const Eigen::Index dim = chain.dimension();
  GapResult r;
  if (dim == 1) {
    r.delta = 1.0;
    r.lambda2_abs = 0.0;
    return r;
  }
  const Vector root = chain.pi.cwiseSqrt();
  const Vector inv_root = root.cwiseInverse();
  const Matrix e = linalg::symmetrized(root.asDiagonal() * chain.p * inv_root.asDiagonal());
  const Vector lambda = linalg::eigvalsh(e);

  const auto unit = std::count_if(lambda.data(), lambda.data() + dim,
                                  [](double l) { return std::abs(l - 1.0) <= kReducibilityTol; });
  if (unit > 1) {
    r.reducible = true;
    r.lambda2_abs = 1.0;
    r.delta = 0.0;
    return r;
  }
  r.lambda2_abs = std::max(std::abs(lambda(dim - 2)), std::abs(lambda(0)));
  r.delta = std::clamp(1.0 - r.lambda2_abs, 0.0, 1.0);
  return r;
}

MixingBounds mixing_time_bounds(double delta, double pi_min, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw PreconditionError("mixing_time_bounds: need 0 < eps < 1/2");
  if (!(pi_min > 0.0 && pi_min <= 1.0)) throw PreconditionError("mixing_time_bounds: need 0 < pi_min <= 1");
  if (!(delta >= 0.0 && delta <= 1.0)) throw PreconditionError("mixing_time_bounds: need 0 <= delta <= 1");
  if (delta == 0.0) {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, inf};
  }
  return {(1.0 / delta - 1.0) * std::log(1.0 / (2.0 * eps)), std::log(1.0 / (eps * pi_min)) / delta};
}

double max_tv_distance(const Matrix& m, const Vector& pi) {
  double worst = 0.0;
  for (Eigen::Index x = 0; x < m.rows(); ++x) {
    worst = std::max(worst, 0.5 * (m.row(x).transpose() - pi).cwiseAbs().sum());
  }
  return worst;
}

std::int64_t exact_mixing_time(const TransitionMatrix& chain, double eps, std::int64_t max_steps) {
  require_same_shape(chain.p, chain.pi, "exact_mixing_time");
  if (chain.dimension() > 256) throw DimensionError("exact_mixing_time is limited to N <= 8");
  if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("exact_mixing_time: need 0 < eps < 1");

  // d(s) is non-increasing in s, so bracket with powers of two and bisect.
  std::vector<Matrix> powers{chain.p};
  while (max_tv_distance(powers.back(), chain.pi) > eps) {
    const std::int64_t reached = std::int64_t{1} << (powers.size() - 1);
    if (reached >= max_steps) {
      throw NumericalError("exact_mixing_time: not mixed after " + std::to_string(max_steps) + " steps");
    }
    powers.push_back(powers.back() * powers.back());
  }
  if (powers.size() == 1) return 1;

  std::int64_t below = std::int64_t{1} << (powers.size() - 2);  // d(below) > eps
  Matrix current = powers[powers.size() - 2];
  for (std::size_t k = powers.size() - 2; k-- > 0;) {
    Matrix candidate = current * powers[k];
    if (max_tv_distance(candidate, chain.pi) > eps) {
      current = std::move(candidate);
      below += std::int64_t{1} << k;
    }
  }
  const std::int64_t steps = below + 1;
  if (steps > max_steps) {
    throw NumericalError("exact_mixing_time: not mixed after " + std::to_string(max_steps) + " steps");
  }
  return steps;
}

TransitionMatrix time_averaged_transition(std::span<const TransitionMatrix> chains) {
  if (chains.empty()) throw PreconditionError("time_averaged_transition: no chains given");
  const auto& first = chains.front();
  TransitionMatrix mean{Matrix::Zero(first.p.rows(), first.p.cols()), first.pi};
  for (const auto& c : chains) {
    if (c.p.rows() != first.p.rows() || c.pi.size() != first.pi.size()) {
      throw DimensionError("time_averaged_transition: chains differ in dimension");
    }
    if ((c.pi - first.pi).cwiseAbs().maxCoeff() > 1e-12) {
      throw PreconditionError("time_averaged_transition: stationary distributions differ");
    }
    mean.p += c.p;
  }
  mean.p /= static_cast<double>(chains.size());
  return mean;
}

}  // namespace qmcmc::chain

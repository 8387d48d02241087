#pragma once

#include <string>
#include <variant>
#include <vector>

namespace qmcmc::ising {

/// epsilon_k = sqrt((h - cos k)^2 + sin^2 k).
double dispersion(double h, double k);

/// Momenta of the two fermion-parity sectors of an even periodic chain.
struct ParityGrid {
  int spins = 0;
  std::vector<double> k0;  // +-(2 pi / N)(l - 1/2), l = 1..N/2
  std::vector<double> k1;  // +-(2 pi / N) l,       l = 1..N/2 - 1

  /// Positive halves; each (k, -k) pair is one two-level block.
  std::vector<double> k0_positive() const;
  std::vector<double> k1_positive() const;
};

ParityGrid momentum_grids(int spins);

struct FiniteTime {
  double t = 0.0;
};
struct LongTime {};
using TimeMode = std::variant<FiniteTime, LongTime>;

std::string mode_name(const TimeMode& mode);

/// A nonnegative number kept as its logarithm.
struct LogValue {
  double log = 0.0;
  bool zero = true;

  double value() const;
  static LogValue from_log(double l) { return LogValue{l, false}; }
  static LogValue of(double v);
};

LogValue log_add(LogValue a, LogValue b);

/// sum_{x in S_1, y in S_0} Q(y|x) for the periodic chain H = -sum Z Z + h sum X.
/// Throws NumericalError naming the mode if 1 - h^2 sin^2 k w_k / eps_k^2 <= 0.
LogValue overlap_sum(int spins, double h, const TimeMode& mode);

struct IsingBoundResult {
  LogValue first;        // overlap sum / (N (N - 1)), or its continuum form
  double second = 0.0;   // e^{-4 beta} / (2 - N (N - 1) e^{-4 beta})
  std::string mode;      // finite_t, long_time or asymptotic

  double first_term() const { return first.value(); }
  double total() const { return first.value() + second; }
};

double second_term(int spins, double beta);

IsingBoundResult bound_finite_n(int spins, double h, const TimeMode& mode, double beta);

struct GammaLambda {
  double gamma = 0.0;
  double lambda = 0.0;
  double error_estimate = 0.0;
  bool flagged = false;  // error estimate above 1e-8
};

/// Continuum integrals over k in [0, pi] by composite midpoint with doubling and
/// Richardson extrapolation, starting from `panels` >= 1000.
GammaLambda gamma_lambda(double h, const TimeMode& mode, int panels = 1024);

/// 2 gamma e^{-N lambda} / (N - 1) + second term.
IsingBoundResult bound_asymptotic(int spins, double h, const TimeMode& mode, double beta);

}  // namespace qmcmc::ising

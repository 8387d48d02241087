#include "qmcmc/ising_analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qmcmc/error.hpp"

namespace qmcmc::ising {
namespace {

constexpr double kPi = std::numbers::pi;

double weight(const TimeMode& mode, double eps) {
  if (const auto* f = std::get_if<FiniteTime>(&mode)) {
    const double s = std::sin(2.0 * f->t * eps);
    return s * s;
  }
  return 0.5;
}

/// h^2 sin^2 k w_k / eps_k^2.
double excitation(double h, double k, const TimeMode& mode) {
  const double eps = dispersion(h, k);
  if (eps == 0.0) return 0.0;
  const double s = std::sin(k);
  return h * h * s * s * weight(mode, eps) / (eps * eps);
}

void check_spins(int spins) {
  if (spins < 4 || spins % 2 != 0) throw PreconditionError("Ising analytics need an even chain with N >= 4");
}

void check_mode(const TimeMode& mode) {
  if (const auto* f = std::get_if<FiniteTime>(&mode); f && !(f->t >= 0.0)) {
    throw PreconditionError("quench time must be nonnegative");
  }
}

LogValue sector(const std::vector<double>& momenta, double h, const TimeMode& mode) {
  double log_product = 0.0;
  double sum = 0.0;
  for (double k : momenta) {
    const double a = excitation(h, k, mode);
    if (!(1.0 - a > 0.0)) {
      std::ostringstream msg;
      msg << "overlap sum: 1 - a_k = " << 1.0 - a << " at k = " << k << ", h = " << h;
      throw NumericalError(msg.str());
    }
    log_product += std::log1p(-a);
    sum += a / (1.0 - a);
  }
  if (sum == 0.0) return LogValue{};
  return LogValue::from_log(log_product + std::log(sum));
}

}  // namespace

double dispersion(double h, double k) {
  const double c = h - std::cos(k);
  const double s = std::sin(k);
  return std::sqrt(c * c + s * s);
}

std::vector<double> ParityGrid::k0_positive() const {
  std::vector<double> out;
  for (double k : k0) {
    if (k > 0.0) out.push_back(k);
  }
  return out;
}

std::vector<double> ParityGrid::k1_positive() const {
  std::vector<double> out;
  for (double k : k1) {
    if (k > 0.0) out.push_back(k);
  }
  return out;
}

ParityGrid momentum_grids(int spins) {
  check_spins(spins);
  ParityGrid grid;
  grid.spins = spins;
  const double step = 2.0 * kPi / spins;
  for (int l = 1; l <= spins / 2; ++l) {
    const double k = step * (l - 0.5);
    grid.k0.push_back(k);
    grid.k0.push_back(-k);
  }
  for (int l = 1; l <= spins / 2 - 1; ++l) {
    const double k = step * l;
    grid.k1.push_back(k);
    grid.k1.push_back(-k);
  }
  return grid;
}

std::string mode_name(const TimeMode& mode) {
  return std::holds_alternative<LongTime>(mode) ? "long_time" : "finite_t";
}

double LogValue::value() const { return zero ? 0.0 : std::exp(log); }

LogValue LogValue::of(double v) {
  if (v < 0.0) throw PreconditionError("LogValue holds nonnegative numbers only");
  if (v == 0.0) return LogValue{};
  return from_log(std::log(v));
}

LogValue log_add(LogValue a, LogValue b) {
  if (a.zero) return b;
  if (b.zero) return a;
  const double hi = std::max(a.log, b.log);
  const double lo = std::min(a.log, b.log);
  return LogValue::from_log(hi + std::log1p(std::exp(lo - hi)));
}

LogValue overlap_sum(int spins, double h, const TimeMode& mode) {
  check_mode(mode);
  const auto grid = momentum_grids(spins);
  return log_add(sector(grid.k0_positive(), h, mode), sector(grid.k1_positive(), h, mode));
}

double second_term(int spins, double beta) {
  const double pairs = static_cast<double>(spins) * (spins - 1);
  const double e = std::exp(-4.0 * beta);
  if (!(pairs * e < 2.0)) {
    throw PreconditionError("bound needs N (N - 1) e^{-4 beta} < 2; beta is too small for this N");
  }
  return e / (2.0 - pairs * e);
}

IsingBoundResult bound_finite_n(int spins, double h, const TimeMode& mode, double beta) {
  IsingBoundResult r;
  r.second = second_term(spins, beta);
  r.first = overlap_sum(spins, h, mode);
  if (!r.first.zero) r.first.log -= std::log(static_cast<double>(spins) * (spins - 1));
  r.mode = mode_name(mode);
  return r;
}

GammaLambda gamma_lambda(double h, const TimeMode& mode, int panels) {
  check_mode(mode);
  if (panels < 1000) throw PreconditionError("gamma_lambda needs at least 1000 panels");

  auto midpoint = [&](long n) {
    const double dk = kPi / static_cast<double>(n);
    double g = 0.0;
    double l = 0.0;
    for (long i = 0; i < n; ++i) {
      const double k = (static_cast<double>(i) + 0.5) * dk;
      const double a = excitation(h, k, mode);
      if (!(1.0 - a > 0.0)) {
        std::ostringstream msg;
        msg << "gamma/lambda integrand singular at k = " << k << ", h = " << h;
        throw NumericalError(msg.str());
      }
      g += a / (1.0 - a);
      l -= std::log1p(-a);
    }
    return std::pair{g * dk / (2.0 * kPi), l * dk / (2.0 * kPi)};
  };

  constexpr long kMaxPanels = 1L << 24;
  constexpr double kTarget = 1e-13;
  long n = panels;
  auto coarse = midpoint(n);
  GammaLambda out;
  for (;;) {
    const auto fine = midpoint(2 * n);
    const double eg = std::abs(fine.first - coarse.first) / 3.0;
    const double el = std::abs(fine.second - coarse.second) / 3.0;
    out.gamma = fine.first + (fine.first - coarse.first) / 3.0;
    out.lambda = fine.second + (fine.second - coarse.second) / 3.0;
    out.error_estimate = std::max(eg, el);
    n *= 2;
    const double scale = std::max({1.0, std::abs(out.gamma), std::abs(out.lambda)});
    if (out.error_estimate <= kTarget * scale || 2 * n > kMaxPanels) break;
    coarse = fine;
  }
  out.gamma = std::max(out.gamma, 0.0);
  out.lambda = std::max(out.lambda, 0.0);
  out.flagged = out.error_estimate > 1e-8;
  return out;
}

IsingBoundResult bound_asymptotic(int spins, double h, const TimeMode& mode, double beta) {
  if (spins < 2) throw PreconditionError("asymptotic bound needs N >= 2");
  IsingBoundResult r;
  r.second = second_term(spins, beta);
  const auto gl = gamma_lambda(h, mode);
  if (gl.gamma > 0.0) {
    r.first = LogValue::from_log(std::log(2.0 * gl.gamma) - spins * gl.lambda - std::log(spins - 1.0));
  }
  r.mode = "asymptotic";
  return r;
}

}  // namespace qmcmc::ising

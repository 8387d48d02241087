#include "qmcmc/linalg.hpp"

#include <lapacke.h>

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>
#include <vector>

#include "qmcmc/error.hpp"

namespace qmcmc::linalg {
namespace {

void run_dsyevd(Matrix& a, Vector& w, bool want_vectors) {
  const auto n = static_cast<lapack_int>(a.rows());
  w.resize(n);
  if (n == 0) return;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', 'L', n,
                                         a.data(), n, w.data());
  if (info != 0) {
    throw NumericalError("dsyevd failed to converge (info = " + std::to_string(info) + ")");
  }
}

void run_dsyevr_values(Matrix& a, Vector& w) {
  const auto n = static_cast<lapack_int>(a.rows());
  w.resize(n);
  if (n == 0) return;
  lapack_int found = 0;
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'A', 'L', n, a.data(), n, 0.0, 0.0, 0, 0, 0.0,
                                         &found, w.data(), nullptr, 1, support.data());
  if (info != 0 || found != n) {
    throw NumericalError("dsyevr failed (info = " + std::to_string(info) + ")");
  }
}

bool flip_candidate(const Matrix& a) {
  const auto n = static_cast<std::size_t>(a.rows());
  return n >= 4 && std::has_single_bit(n);
}

// Parity blocks in the basis (|x> +- |~x>)/sqrt(2), x < n/2.
std::pair<Matrix, Matrix> flip_blocks(const Matrix& a) {
  const Eigen::Index n = a.rows();
  const Eigen::Index half = n / 2;
  const Eigen::Index mask = n - 1;
  Matrix even(half, half);
  Matrix odd(half, half);
  for (Eigen::Index y = 0; y < half; ++y) {
    for (Eigen::Index x = 0; x < half; ++x) {
      const double direct = a(x, y);
      const double crossed = a(x, mask ^ y);
      even(x, y) = direct + crossed;
      odd(x, y) = direct - crossed;
    }
  }
  return {std::move(even), std::move(odd)};
}

}  // namespace

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

bool is_flip_symmetric(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols() || !flip_candidate(a)) return false;
  const Eigen::Index n = a.rows();
  const Eigen::Index mask = n - 1;
  const double tol = rel_tol * std::max(max_abs(a), 1e-300);
  for (Eigen::Index y = 0; y < n; ++y) {
    for (Eigen::Index x = 0; x < n; ++x) {
      if (std::abs(a(x, y) - a(mask ^ x, mask ^ y)) > tol) return false;
    }
  }
  return true;
}

SymmetricEigen eigh(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("eigh: matrix is not square");
  SymmetricEigen out;
  if (!is_flip_symmetric(a)) {
    out.vectors = a;
    run_dsyevd(out.vectors, out.values, true);
    return out;
  }

  auto [even, odd] = flip_blocks(a);
  Vector w_even, w_odd;
  run_dsyevd(even, w_even, true);
  run_dsyevd(odd, w_odd, true);

  const Eigen::Index n = a.rows();
  const Eigen::Index half = n / 2;
  const Eigen::Index mask = n - 1;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto value_of = [&](Eigen::Index j) { return j < half ? w_even(j) : w_odd(j - half); };
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index l, Eigen::Index r) { return value_of(l) < value_of(r); });

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index col = 0; col < n; ++col) {
    const Eigen::Index j = order[static_cast<std::size_t>(col)];
    const bool is_even = j < half;
    const auto block_col = is_even ? even.col(j) : odd.col(j - half);
    const double sign = is_even ? 1.0 : -1.0;
    out.values(col) = value_of(j);
    for (Eigen::Index x = 0; x < half; ++x) {
      const double u = block_col(x) * inv_sqrt2;
      out.vectors(x, col) = u;
      out.vectors(mask ^ x, col) = sign * u;
    }
  }
  return out;
}

Vector eigvalsh(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("eigvalsh: matrix is not square");
  Vector w;
  if (!is_flip_symmetric(a)) {
    Matrix work = a;
    run_dsyevr_values(work, w);
    return w;
  }
  auto [even, odd] = flip_blocks(a);
  Vector w_even, w_odd;
  run_dsyevr_values(even, w_even);
  run_dsyevr_values(odd, w_odd);
  w.resize(a.rows());
  w << w_even, w_odd;
  std::sort(w.data(), w.data() + w.size());
  return w;
}

}  // namespace qmcmc::linalg

#include "qmcmc/quench.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "qmcmc/error.hpp"

namespace qmcmc::quench {
namespace {

constexpr double kStochasticTol = 1e-10;

void check_dimension(int spins, int max_spins) {
  if (spins < 1) throw DimensionError("quench Hamiltonian needs at least one spin");
  if (spins > max_spins) {
    throw DimensionError("N = " + std::to_string(spins) + " exceeds the dense limit of " +
                         std::to_string(max_spins) + " spins");
  }
}

int spins_of_dimension(Eigen::Index dim) {
  const auto d = static_cast<std::uint64_t>(dim);
  if (!std::has_single_bit(d)) throw DimensionError("dimension is not a power of two");
  return std::countr_zero(d);
}

void add_transverse_field(Matrix& h, int spins, double field) {
  if (field == 0.0) return;
  const Eigen::Index dim = h.rows();
  for (Eigen::Index y = 0; y < dim; ++y) {
    for (int i = 0; i < spins; ++i) h(y ^ (Eigen::Index{1} << i), y) = field;
  }
}

constexpr Eigen::Index kMaxColumnGroup = 4;
constexpr Eigen::Index kProjectorTile = 128;

// +1 / -1 per eigenvector if every column is exactly even or odd under x -> ~x.
std::optional<std::vector<int>> flip_parities(const Matrix& v) {
  const Eigen::Index dim = v.rows();
  if (dim < 4 || !std::has_single_bit(static_cast<std::uint64_t>(dim))) return std::nullopt;
  const Eigen::Index half = dim / 2;
  const Eigen::Index mask = dim - 1;
  std::vector<int> out(static_cast<std::size_t>(v.cols()));
  for (Eigen::Index n = 0; n < v.cols(); ++n) {
    bool even = true;
    bool odd = true;
    for (Eigen::Index x = 0; x < half && (even || odd); ++x) {
      even = even && v(mask ^ x, n) == v(x, n);
      odd = odd && v(mask ^ x, n) == -v(x, n);
    }
    if (!even && !odd) return std::nullopt;
    out[static_cast<std::size_t>(n)] = even ? 1 : -1;
  }
  return out;
}

// Lower triangles of sum_g A_g o A_g into `direct` and, if given,
// sum_g B_g o B_g into `crossed`, where A_g = U_g U_g^T and B_g = U_g S_g U_g^T
// for the signs S. Entries of the product are
// sum_{n,m in g} (u_xn u_xm)(u_yn u_ym), so small groups become product
// columns of one rank update; larger groups are squared tile by tile.
void group_squares(const Matrix& u, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& groups,
                   const std::vector<int>& sign, Matrix& direct, Matrix* crossed) {
  const Eigen::Index rows = u.rows();
  auto s = [&](Eigen::Index n) { return sign[static_cast<std::size_t>(n)]; };
  Eigen::Index plus = 0;
  Eigen::Index minus = 0;
  for (const auto& [b, e] : groups) {
    if (e - b > kMaxColumnGroup) continue;
    for (Eigen::Index a = b; a < e; ++a) {
      for (Eigen::Index a2 = a; a2 < e; ++a2) (s(a) == s(a2) ? plus : minus) += 1;
    }
  }
  Matrix w_plus(rows, plus);
  Matrix w_minus(rows, minus);
  plus = 0;
  minus = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> large;
  for (const auto& [b, e] : groups) {
    if (e - b > kMaxColumnGroup) {
      large.emplace_back(b, e);
      continue;
    }
    for (Eigen::Index a = b; a < e; ++a) {
      for (Eigen::Index a2 = a; a2 < e; ++a2) {
        const double scale = a == a2 ? 1.0 : std::sqrt(2.0);
        auto col = s(a) == s(a2) ? w_plus.col(plus++) : w_minus.col(minus++);
        col = scale * u.col(a).cwiseProduct(u.col(a2));
      }
    }
  }
  if (plus > 0) direct.selfadjointView<Eigen::Lower>().rankUpdate(w_plus);
  if (minus > 0) direct.selfadjointView<Eigen::Lower>().rankUpdate(w_minus);
  if (crossed != nullptr) {
    if (plus > 0) crossed->selfadjointView<Eigen::Lower>().rankUpdate(w_plus);
    if (minus > 0) crossed->selfadjointView<Eigen::Lower>().rankUpdate(w_minus, -1.0);
  }
  if (large.empty()) return;

  // Columns of each large group reordered even-first.
  Matrix sorted(rows, u.cols());
  std::vector<Eigen::Index> evens(large.size());
  for (std::size_t g = 0; g < large.size(); ++g) {
    const auto [b, e] = large[g];
    Eigen::Index at = b;
    for (Eigen::Index a = b; a < e; ++a) {
      if (s(a) > 0) sorted.col(at++) = u.col(a);
    }
    evens[g] = at - b;
    for (Eigen::Index a = b; a < e; ++a) {
      if (s(a) < 0) sorted.col(at++) = u.col(a);
    }
  }
  Matrix even_tile;
  Matrix odd_tile;
  for (Eigen::Index r0 = 0; r0 < rows; r0 += kProjectorTile) {
    const Eigen::Index height = std::min(kProjectorTile, rows - r0);
    const Eigen::Index width = r0 + height;
    auto d = direct.block(r0, 0, height, width);
    for (std::size_t g = 0; g < large.size(); ++g) {
      const auto [b, e] = large[g];
      const Eigen::Index ne = evens[g];
      const Eigen::Index no = e - b - ne;
      even_tile.setZero(height, width);
      odd_tile.setZero(height, width);
      if (ne > 0) {
        even_tile.noalias() = sorted.block(r0, b, height, ne) * sorted.block(0, b, width, ne).transpose();
      }
      if (no > 0) {
        odd_tile.noalias() = sorted.block(r0, b + ne, height, no) * sorted.block(0, b + ne, width, no).transpose();
      }
      d += (even_tile + odd_tile).cwiseAbs2();
      if (crossed != nullptr) crossed->block(r0, 0, height, width) += (even_tile - odd_tile).cwiseAbs2();
    }
  }
}

}  // namespace

QuenchHamiltonian build_hamiltonian(const Vector& energies, double field, int max_spins) {
  const int spins = spins_of_dimension(energies.size());
  check_dimension(spins, max_spins);
  QuenchHamiltonian h;
  h.spins = spins;
  h.field = field;
  h.matrix = energies.asDiagonal();
  add_transverse_field(h.matrix, spins, field);
  return h;
}

QuenchHamiltonian build_hamiltonian(const models::ClassicalModel& model, double field, int max_spins) {
  check_dimension(models::spin_count(model), max_spins);
  return build_hamiltonian(models::energy_table(model, max_spins), field, max_spins);
}

QuenchHamiltonian effective_large_h_hamiltonian(const models::ClassicalModel& model, double field,
                                                int max_spins) {
  const auto* sk = std::get_if<models::SkModel>(&model);
  if (sk == nullptr) throw PreconditionError("effective large-h Hamiltonian is defined for SK instances only");
  const int n = sk->spins();
  check_dimension(n, max_spins);
  const Eigen::Index dim = Eigen::Index{1} << n;

  QuenchHamiltonian h;
  h.spins = n;
  h.field = field;
  h.kind = HamiltonianKind::EffectiveXY;
  h.matrix = Matrix::Zero(dim, dim);
  for (Eigen::Index x = 0; x < dim; ++x) {
    const auto ux = static_cast<std::uint32_t>(x);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double J = sk->couplings(i, j);
        const int zz = models::spin_at(ux, i) * models::spin_at(ux, j);
        h.matrix(x, x) += J * zz;
        // Y_i Y_j |x> = -x_i x_j |x with i, j flipped>
        const Eigen::Index flipped = x ^ ((Eigen::Index{1} << i) | (Eigen::Index{1} << j));
        h.matrix(flipped, x) += -J * zz;
      }
    }
  }
  add_transverse_field(h.matrix, n, field);
  return h;
}

double Spectrum::orthonormality_residual() const {
  const Matrix gram = vectors.transpose() * vectors;
  return linalg::max_abs(gram - Matrix::Identity(gram.rows(), gram.cols()));
}

double Spectrum::reconstruction_residual(const Matrix& h) const {
  const Matrix rebuilt = vectors * energies.asDiagonal() * vectors.transpose();
  return linalg::max_abs(h - rebuilt);
}

Spectrum diagonalize(const QuenchHamiltonian& h) {
  if (linalg::max_abs(h.matrix - h.matrix.transpose()) > 1e-12 * linalg::max_abs(h.matrix)) {
    throw PreconditionError("diagonalize: Hamiltonian is not symmetric");
  }
  auto eig = linalg::eigh(h.matrix);
  Spectrum s;
  s.energies = std::move(eig.values);
  s.vectors = std::move(eig.vectors);
  s.spins = h.spins;
  return s;
}

Spectrum pure_field_spectrum(int spins, double field) {
  check_dimension(spins, models::kDefaultMaxSpins);
  const Eigen::Index dim = Eigen::Index{1} << spins;
  std::vector<Eigen::Index> modes(static_cast<std::size_t>(dim));
  std::iota(modes.begin(), modes.end(), 0);
  auto value = [&](Eigen::Index m) {
    return field * (spins - 2 * std::popcount(static_cast<std::uint64_t>(m)));
  };
  std::stable_sort(modes.begin(), modes.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return value(a) < value(b); });
  const double norm = std::pow(2.0, -0.5 * spins);
  Spectrum s;
  s.spins = spins;
  s.energies.resize(dim);
  s.vectors.resize(dim, dim);
  for (Eigen::Index col = 0; col < dim; ++col) {
    const Eigen::Index m = modes[static_cast<std::size_t>(col)];
    s.energies(col) = value(m);
    for (Eigen::Index x = 0; x < dim; ++x) {
      const bool odd = std::popcount(static_cast<std::uint64_t>(x & m)) % 2 == 1;
      s.vectors(x, col) = odd ? -norm : norm;
    }
  }
  return s;
}

ProposalMatrix::ProposalMatrix(Matrix m) : q(std::move(m)) {
  symmetric = linalg::max_abs(q - q.transpose()) <= kStochasticTol;
  doubly_stochastic = max_row_sum_error() <= kStochasticTol && max_column_sum_error() <= kStochasticTol &&
                      q.minCoeff() >= -kStochasticTol;
}

double ProposalMatrix::max_row_sum_error() const {
  return (q.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

double ProposalMatrix::max_column_sum_error() const {
  return (q.colwise().sum().array() - 1.0).abs().maxCoeff();
}

ProposalMatrix proposal_at_time(const Spectrum& spectrum, double t) {
  if (!(t >= 0.0)) throw PreconditionError("proposal_at_time: t must be non-negative");
  const Matrix& v = spectrum.vectors;
  const Vector phase = spectrum.energies * t;
  // <x|U|y> = sum_n e^{-i E_n t} v_xn v_yn, split into real and imaginary parts.
  Matrix weighted = v * phase.array().cos().matrix().asDiagonal();
  Matrix re = weighted * v.transpose();
  weighted = v * phase.array().sin().matrix().asDiagonal();
  Matrix im = weighted * v.transpose();
  Matrix q = re.cwiseAbs2() + im.cwiseAbs2();
  return ProposalMatrix(linalg::symmetrized(q));
}

double default_degeneracy_tol(const Vector& sorted_energies) {
  if (sorted_energies.size() == 0) return 0.0;
  return 1e-10 * (sorted_energies(sorted_energies.size() - 1) - sorted_energies(0));
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> degeneracy_groups(const Vector& sorted_energies,
                                                                     double tol) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> groups;
  const Eigen::Index n = sorted_energies.size();
  Eigen::Index begin = 0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    if (i == n || sorted_energies(i) - sorted_energies(i - 1) > tol) {
      groups.emplace_back(begin, i);
      begin = i;
    }
  }
  return groups;
}

ProposalMatrix proposal_long_time(const Spectrum& spectrum, std::optional<double> degeneracy_tol) {
  const double tol = degeneracy_tol.value_or(default_degeneracy_tol(spectrum.energies));
  if (!(tol >= 0.0)) throw PreconditionError("degeneracy tolerance must be non-negative");
  const Matrix& v = spectrum.vectors;
  const Eigen::Index dim = v.rows();
  const auto groups = degeneracy_groups(spectrum.energies, tol);

  const auto parity = flip_parities(v);
  if (!parity) {
    Matrix q = Matrix::Zero(dim, dim);
    group_squares(v, groups, std::vector<int>(static_cast<std::size_t>(dim), 1), q, nullptr);
    q.triangularView<Eigen::StrictlyUpper>() = q.transpose();
    return ProposalMatrix(std::move(q));
  }

  // With v(~x) = s_n v(x), the x, y < dim/2 block and the x, ~y block follow
  // from the top half of the eigenvectors alone.
  const Eigen::Index half = dim / 2;
  const Eigen::Index mask = dim - 1;
  Matrix direct = Matrix::Zero(half, half);
  Matrix crossed = Matrix::Zero(half, half);
  group_squares(v.topRows(half), groups, *parity, direct, &crossed);
  direct.triangularView<Eigen::StrictlyUpper>() = direct.transpose();
  crossed.triangularView<Eigen::StrictlyUpper>() = crossed.transpose();
  Matrix q(dim, dim);
  for (Eigen::Index x = 0; x < half; ++x) {
    for (Eigen::Index y = 0; y < half; ++y) {
      q(y, x) = direct(y, x);
      q(mask ^ y, mask ^ x) = direct(y, x);
      q(mask ^ y, x) = crossed(y, x);
      q(y, mask ^ x) = crossed(y, x);
    }
  }
  return ProposalMatrix(std::move(q));
}

Vector ipr(const Spectrum& spectrum) {
  return spectrum.vectors.array().square().square().rowwise().sum().matrix();
}

double ipr_window_average(const Vector& ipr_values, const Vector& energies, double lo, double hi) {
  if (ipr_values.size() != energies.size()) throw DimensionError("ipr and energy tables differ in size");
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index x = 0; x < energies.size(); ++x) {
    if (energies(x) >= lo && energies(x) <= hi) {
      sum += ipr_values(x);
      ++count;
    }
  }
  if (count == 0) throw PreconditionError("energy window contains no configurations");
  return sum / static_cast<double>(count);
}

ProposalMatrix perturbative_local_proposal(const Vector& energies, double field) {
  const int spins = spins_of_dimension(energies.size());
  const Eigen::Index dim = energies.size();
  Matrix q = Matrix::Zero(dim, dim);
  double worst_row = 0.0;
  for (Eigen::Index y = 0; y < dim; ++y) {
    double row = 0.0;
    for (int i = 0; i < spins; ++i) {
      const Eigen::Index x = y ^ (Eigen::Index{1} << i);
      const double gap = energies(x) - energies(y);
      const double value = field == 0.0 ? 0.0 : 2.0 * field * field / (gap * gap);
      q(y, x) = value;
      row += value;
    }
    worst_row = std::max(worst_row, row);
    q(y, y) = 1.0 - row;
  }
  if (worst_row > 1.0) {
    // Row mass scales as h^2.
    const double limit = std::isfinite(worst_row) ? std::abs(field) / std::sqrt(worst_row) : 0.0;
    std::ostringstream msg;
    msg << "perturbative regime exceeded: off-diagonal row mass " << worst_row << " at h = " << field
        << "; requires |h| <= " << limit;
    throw PerturbativeRegimeError(msg.str(), limit);
  }
  return ProposalMatrix(std::move(q));
}

ProposalMatrix perturbative_local_proposal(const models::ClassicalModel& model, double field) {
  return perturbative_local_proposal(models::energy_table(model), field);
}

ProposalMatrix uniform_proposal(int spins) {
  check_dimension(spins, models::kDefaultMaxSpins);
  const Eigen::Index dim = Eigen::Index{1} << spins;
  return ProposalMatrix(Matrix::Constant(dim, dim, 1.0 / static_cast<double>(dim)));
}

ProposalMatrix local_proposal(int spins) {
  check_dimension(spins, models::kDefaultMaxSpins);
  const Eigen::Index dim = Eigen::Index{1} << spins;
  Matrix q = Matrix::Zero(dim, dim);
  for (Eigen::Index y = 0; y < dim; ++y) {
    for (int i = 0; i < spins; ++i) q(y, y ^ (Eigen::Index{1} << i)) = 1.0 / spins;
  }
  return ProposalMatrix(std::move(q));
}

namespace {

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("truncated binary matrix");
  return value;
}

}  // namespace

void write_binary(std::ostream& out, const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("write_binary: matrix is not square");
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(out, m(r, c));
  }
}

Matrix read_binary(std::istream& in) {
  const auto dim = get_le<std::uint64_t>(in);
  if (dim > (std::uint64_t{1} << 16)) throw DimensionError("binary matrix header is implausibly large");
  const auto n = static_cast<Eigen::Index>(dim);
  Matrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = get_le<double>(in);
  }
  return m;
}

void write_csv(std::ostream& out, const ProposalMatrix& q) {
  if (q.dimension() > 256) throw DimensionError("CSV export is limited to N <= 8");
  out.precision(17);
  for (Eigen::Index y = 0; y < q.q.rows(); ++y) {
    for (Eigen::Index x = 0; x < q.q.cols(); ++x) {
      if (x) out << ',';
      out << q.q(y, x);
    }
    out << '\n';
  }
}

void write_ipr_csv(std::ostream& out, const Vector& energies, const Vector& ipr_values) {
  if (ipr_values.size() != energies.size()) throw DimensionError("ipr and energy tables differ in size");
  out << "index,energy,ipr\n";
  out.precision(17);
  for (Eigen::Index x = 0; x < energies.size(); ++x) out << x << ',' << energies(x) << ',' << ipr_values(x) << '\n';
}

}  // namespace qmcmc::quench

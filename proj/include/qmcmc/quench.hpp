#pragma once

#include <iosfwd>
#include <optional>

#include "qmcmc/linalg.hpp"
#include "qmcmc/models.hpp"

namespace qmcmc::quench {

enum class HamiltonianKind { Transverse, EffectiveXY };

/// Dense 2^N x 2^N quench Hamiltonian in the computational basis.
struct QuenchHamiltonian {
  Matrix matrix;
  int spins = 0;
  double field = 0.0;
  HamiltonianKind kind = HamiltonianKind::Transverse;
};

/// H_c + h * sum_i sigma^x_i. Diagonal is the classical energy table; every
/// Hamming-distance-one pair carries h.
QuenchHamiltonian build_hamiltonian(const models::ClassicalModel& model, double field,
                                    int max_spins = models::kDefaultMaxSpins);
QuenchHamiltonian build_hamiltonian(const Vector& energies, double field,
                                    int max_spins = models::kDefaultMaxSpins);

/// Large-field effective Hamiltonian of an SK instance:
///   sum_{i<j} J_ij (Z_i Z_j + Y_i Y_j) + h sum_i X_i.
/// Longitudinal fields project out at first order and are dropped.
QuenchHamiltonian effective_large_h_hamiltonian(const models::ClassicalModel& model, double field,
                                                int max_spins = models::kDefaultMaxSpins);

struct Spectrum {
  Vector energies;  // ascending
  Matrix vectors;   // column n is |n> in the computational basis
  int spins = 0;

  Eigen::Index dimension() const { return energies.size(); }
  double orthonormality_residual() const;
  double reconstruction_residual(const Matrix& h) const;
};

Spectrum diagonalize(const QuenchHamiltonian& h);

/// Analytic eigenbasis of h * sum_i X_i (Hadamard product states). Used where a
/// fully delocalised basis is wanted; a numerical solver would return an
/// arbitrary basis inside the highly degenerate multiplets.
Spectrum pure_field_spectrum(int spins, double field);

/// Q(x|y) stored at (row y, column x).
struct ProposalMatrix {
  Matrix q;
  bool symmetric = false;
  bool doubly_stochastic = false;

  ProposalMatrix() = default;
  explicit ProposalMatrix(Matrix m);
  Eigen::Index dimension() const { return q.rows(); }
  double max_row_sum_error() const;
  double max_column_sum_error() const;
};

/// Q_t(x|y) = |<x| exp(-iHt) |y>|^2.
ProposalMatrix proposal_at_time(const Spectrum& spectrum, double t);

/// Infinite-time average of Q_t. Eigenvalues closer than `degeneracy_tol`
/// (default 1e-10 times the spectral range) share a projector P_g and
/// Q(x|y) = sum_g |<x|P_g|y>|^2, which reduces to sum_n |<x|n>|^2 |<n|y>|^2
/// for a non-degenerate spectrum.
ProposalMatrix proposal_long_time(const Spectrum& spectrum,
                                  std::optional<double> degeneracy_tol = std::nullopt);

/// Degeneracy groups used by proposal_long_time, as [begin, end) column ranges.
std::vector<std::pair<Eigen::Index, Eigen::Index>> degeneracy_groups(const Vector& sorted_energies,
                                                                     double tol);
double default_degeneracy_tol(const Vector& sorted_energies);

/// IPR(x) = sum_n |<n|x>|^4.
Vector ipr(const Spectrum& spectrum);

/// Mean IPR over configurations with energy in [lo, hi].
double ipr_window_average(const Vector& ipr_values, const Vector& energies, double lo, double hi);

/// Lowest-order small-field proposal: 2 h^2 / (E_x - E_y)^2 on single flips,
/// remainder on the diagonal. Throws PerturbativeRegimeError if a row's
/// off-diagonal mass exceeds one.
ProposalMatrix perturbative_local_proposal(const models::ClassicalModel& model, double field);
ProposalMatrix perturbative_local_proposal(const Vector& energies, double field);

ProposalMatrix uniform_proposal(int spins);
ProposalMatrix local_proposal(int spins);

/// Binary layout: little-endian uint64 dimension, then dimension^2 row-major doubles.
void write_binary(std::ostream& out, const Matrix& m);
Matrix read_binary(std::istream& in);

/// Dense CSV, one line per source configuration y listing Q(x|y) over x. N <= 8.
void write_csv(std::ostream& out, const ProposalMatrix& q);

/// `index,energy,ipr` rows.
void write_ipr_csv(std::ostream& out, const Vector& energies, const Vector& ipr_values);

}  // namespace qmcmc::quench

#include <doctest.h>

#include <cmath>
#include <random>

#include "qmcmc/chain.hpp"
#include "qmcmc/error.hpp"

using namespace qmcmc;
using namespace qmcmc::chain;

namespace {

TransitionMatrix two_state(double a, double b) {
  TransitionMatrix t;
  t.p.resize(2, 2);
  t.p << 1 - a, a, b, 1 - b;
  t.pi.resize(2);
  t.pi << b / (a + b), a / (a + b);
  return t;
}

// Smallest s with max TV <= eps by plain repeated multiplication.
std::int64_t naive_mixing_time(const TransitionMatrix& c, double eps) {
  Matrix m = c.p;
  for (std::int64_t s = 1; s < 100000; ++s) {
    if (max_tv_distance(m, c.pi) <= eps) return s;
    m = m * c.p;
  }
  return -1;
}

TransitionMatrix quench_chain(const models::ClassicalModel& model, double h, double beta) {
  const auto b = models::boltzmann(models::energy_table(model), beta);
  return metropolis_chain(b, quench::proposal_long_time(quench::diagonalize(quench::build_hamiltonian(model, h))));
}

}  // namespace

TEST_SUITE("chain") {
  TEST_CASE("Metropolis acceptance") {
    Vector e(2);
    e << 0.0, 2.0;
    const auto b = models::boltzmann(e, 5.0);
    const auto a = metropolis_acceptance(b, quench::ProposalMatrix(Matrix::Constant(2, 2, 0.5)));
    CHECK(a(0, 1) == doctest::Approx(std::exp(-10.0)).epsilon(1e-14));
    CHECK(a(1, 0) == 1.0);

    Vector flat = Vector::Zero(4);
    const auto af = metropolis_acceptance(models::boltzmann(flat, 3.0), quench::uniform_proposal(2));
    CHECK(af.isApprox(Matrix::Ones(4, 4), 0.0));

    // Zero proposals carry zero acceptance.
    const auto al = metropolis_acceptance(models::boltzmann(Vector::Zero(4), 1.0), quench::local_proposal(2));
    CHECK(al(0, 3) == 0.0);
  }

  TEST_CASE("transition matrices") {
    const auto sk = models::sample_sk(5, {3, 0});
    const Vector e = models::energy_table(sk);
    const auto q = quench::proposal_long_time(quench::diagonalize(quench::build_hamiltonian(sk, 0.8)));

    const auto b0 = models::boltzmann(e, 0.0);
    const auto p0 = metropolis_chain(b0, q);
    CHECK((p0.p - q.q).cwiseAbs().maxCoeff() <= 1e-14);

    const auto id = metropolis_chain(models::boltzmann(e, 5.0), quench::ProposalMatrix(Matrix::Identity(32, 32)));
    CHECK(id.p == Matrix::Identity(32, 32));

    const auto p5 = metropolis_chain(models::boltzmann(e, 5.0), q);
    CHECK(detailed_balance_residual(p5) <= 1e-12);
    CHECK((p5.p.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-10);
    CHECK(p5.p.minCoeff() >= 0.0);
    // pi is stationary.
    CHECK((p5.pi.transpose() * p5.p - p5.pi.transpose()).cwiseAbs().maxCoeff() <= 1e-14);

    Matrix bad = Matrix::Constant(2, 2, 1.5);
    CHECK_THROWS_AS(transition_matrix(quench::ProposalMatrix(bad), Matrix::Ones(2, 2), Vector::Constant(2, 0.5)),
                    NumericalError);
  }

  TEST_CASE("spectral gaps") {
    TransitionMatrix id{Matrix::Identity(4, 4), Vector::Constant(4, 0.25)};
    const auto g = spectral_gap(id);
    CHECK(g.reducible);
    CHECK(g.delta == 0.0);

    const auto two = two_state(0.3, 0.2);
    const auto g2 = spectral_gap(two);
    CHECK(g2.delta == doctest::Approx(0.5).epsilon(1e-14));
    CHECK_FALSE(g2.reducible);

    const auto b = models::boltzmann(models::energy_table(models::sample_sk(4, {1, 0})), 0.0);
    CHECK(spectral_gap(metropolis_chain(b, quench::uniform_proposal(4))).delta == doctest::Approx(1.0).epsilon(1e-12));

    // Negative eigenvalues count: the flip chain has lambda = -1.
    TransitionMatrix flip{Matrix(2, 2), Vector::Constant(2, 0.5)};
    flip.p << 0, 1, 1, 0;
    CHECK(spectral_gap(flip).delta == doctest::Approx(0.0).epsilon(1e-14));
    CHECK_FALSE(spectral_gap(flip).reducible);

    // Cross-check against a general eigensolver on a reversible chain.
    const auto p = quench_chain(models::sample_sk(5, {2, 2}), 1.1, 2.0);
    const Eigen::EigenSolver<Matrix> general(p.p);
    std::vector<double> mags;
    for (Eigen::Index i = 0; i < general.eigenvalues().size(); ++i) mags.push_back(std::abs(general.eigenvalues()(i)));
    std::sort(mags.rbegin(), mags.rend());
    CHECK(spectral_gap(p).delta == doctest::Approx(1.0 - mags[1]).epsilon(1e-9));

    TransitionMatrix irreversible{Matrix(3, 3), Vector::Constant(3, 1.0 / 3)};
    irreversible.p << 0, 1, 0, 0, 0, 1, 1, 0, 0;
    CHECK_THROWS_AS(spectral_gap(irreversible), DetailedBalanceError);
  }

  TEST_CASE("mixing-time bounds") {
    const auto m = mixing_time_bounds(0.5, 1.0 / 16, 0.05);
    CHECK(m.lower == doctest::Approx(std::log(10.0)).epsilon(1e-14));
    CHECK(m.upper == doctest::Approx(2.0 * std::log(320.0)).epsilon(1e-14));
    CHECK(mixing_time_bounds(1.0, 0.1, 0.1).lower == 0.0);
    CHECK(std::isinf(mixing_time_bounds(0.0, 0.1, 0.1).upper));
    CHECK_THROWS_AS(mixing_time_bounds(0.5, 0.1, 0.6), PreconditionError);
  }

  TEST_CASE("exact mixing time") {
    TransitionMatrix rank_one{Matrix(2, 2), Vector(2)};
    rank_one.pi << 0.3, 0.7;
    rank_one.p << 0.3, 0.7, 0.3, 0.7;
    CHECK(exact_mixing_time(rank_one, 0.01) == 1);

    TransitionMatrix id{Matrix::Identity(4, 4), Vector::Constant(4, 0.25)};
    CHECK_THROWS_AS(exact_mixing_time(id, 0.1), NumericalError);

    const auto b = models::boltzmann(models::energy_table(models::IsingChain{4}), 1.0);
    const auto u = metropolis_chain(b, quench::uniform_proposal(4));
    const double eps = 0.05;
    const auto s = exact_mixing_time(u, eps);
    CHECK(s == naive_mixing_time(u, eps));
    const auto bounds = mixing_time_bounds(spectral_gap(u).delta, b.pi_min, eps);
    CHECK(s >= bounds.lower);
    CHECK(s <= bounds.upper);

    for (std::uint64_t i = 0; i < 5; ++i) {
      const auto c = quench_chain(models::sample_sk(4, {6, i}), 0.7, 1.0);
      const auto steps = exact_mixing_time(c, 0.1);
      CHECK(steps == naive_mixing_time(c, 0.1));
      const auto bb = mixing_time_bounds(spectral_gap(c).delta, c.pi.minCoeff(), 0.1);
      CHECK(steps >= bb.lower);
      CHECK(steps <= bb.upper);
    }
  }

  TEST_CASE("time-averaged transitions") {
    const auto c = two_state(0.3, 0.2);
    std::vector<TransitionMatrix> same{c, c, c};
    CHECK(time_averaged_transition(same).p.isApprox(c.p, 1e-15));

    TransitionMatrix a{Matrix::Identity(2, 2), Vector::Constant(2, 0.5)};
    TransitionMatrix f{Matrix(2, 2), Vector::Constant(2, 0.5)};
    f.p << 0, 1, 1, 0;
    std::vector<TransitionMatrix> pair{a, f};
    const auto mean = time_averaged_transition(pair);
    CHECK(mean.p.isApprox(Matrix::Constant(2, 2, 0.5)));
    CHECK(spectral_gap(mean).delta == doctest::Approx(1.0));

    const auto sk = models::sample_sk(6, {13, 0});
    const auto b = models::boltzmann(models::energy_table(sk), 5.0);
    const auto s = quench::diagonalize(quench::build_hamiltonian(sk, 0.9));
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> ut(0.0, 20.0);
    std::vector<TransitionMatrix> chains;
    double mean_gap = 0.0;
    for (int i = 0; i < 20; ++i) {
      chains.push_back(metropolis_chain(b, quench::proposal_at_time(s, ut(gen))));
      mean_gap += spectral_gap(chains.back()).delta / 20.0;
    }
    const auto avg = time_averaged_transition(chains);
    CHECK(detailed_balance_residual(avg) <= 1e-12);
    CHECK((avg.p.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(spectral_gap(avg).delta >= mean_gap - 1e-10);

    std::vector<TransitionMatrix> mismatched{two_state(0.3, 0.2), two_state(0.2, 0.3)};
    CHECK_THROWS_AS(time_averaged_transition(mismatched), PreconditionError);
  }
}

#include "qmcmc/models.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <ostream>

#include "qmcmc/error.hpp"
#include "qmcmc/rng.hpp"

namespace qmcmc::models {
namespace {

constexpr std::uint64_t kCouplingStream = 1;
constexpr std::uint64_t kFieldStream = 2;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

double chain_energy(const IsingChain& m, std::uint32_t x) {
  double e = 0.0;
  for (int i = 0; i < m.spins; ++i) {
    e -= spin_at(x, i) * spin_at(x, (i + 1) % m.spins);
  }
  return e;
}

double sk_energy(const SkModel& m, std::uint32_t x) {
  const int n = m.spins();
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    const int si = spin_at(x, i);
    e += m.fields(i) * si;
    for (int j = i + 1; j < n; ++j) e -= m.couplings(i, j) * si * spin_at(x, j);
  }
  return e;
}

double pspin_energy(const PSpinModel& m, std::uint32_t x) {
  double e = 0.0;
  for (std::size_t c = 0; c < m.couplings.size(); ++c) {
    int prod = 1;
    for (int a = 0; a < m.order; ++a) prod *= spin_at(x, m.tuples[c * m.order + a]);
    e -= m.couplings[c] * prod;
  }
  for (Eigen::Index i = 0; i < m.fields.size(); ++i) e += m.fields(i) * spin_at(x, static_cast<int>(i));
  return e;
}

void check_spins_fit(int spins) {
  if (spins < 1 || spins > 30) throw DimensionError("spin count out of range: " + std::to_string(spins));
}

double factorial(int p) {
  double f = 1.0;
  for (int i = 2; i <= p; ++i) f *= i;
  return f;
}

}  // namespace

std::vector<int> SpinConfiguration::values() const {
  std::vector<int> v(static_cast<std::size_t>(spins));
  for (int i = 0; i < spins; ++i) v[static_cast<std::size_t>(i)] = spin(i);
  return v;
}

SpinConfiguration SpinConfiguration::from_values(std::span<const int> values) {
  SpinConfiguration c;
  c.spins = static_cast<int>(values.size());
  check_spins_fit(c.spins);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == -1) {
      c.index |= (1U << i);
    } else if (values[i] != 1) {
      throw PreconditionError("spin values must be +1 or -1");
    }
  }
  return c;
}

int hamming_distance(std::uint32_t a, std::uint32_t b) { return std::popcount(a ^ b); }

int spin_count(const ClassicalModel& model) {
  return std::visit(overloaded{[](const IsingChain& m) { return m.spins; },
                               [](const SkModel& m) { return m.spins(); },
                               [](const PSpinModel& m) { return m.spins; }},
                    model);
}

std::string model_name(const ClassicalModel& model) {
  return std::visit(overloaded{[](const IsingChain&) { return std::string("ising"); },
                               [](const SkModel&) { return std::string("sk"); },
                               [](const PSpinModel&) { return std::string("pspin"); }},
                    model);
}

double energy(const ClassicalModel& model, SpinConfiguration x) {
  const int n = spin_count(model);
  if (x.spins != n) {
    throw DimensionError("configuration has " + std::to_string(x.spins) + " spins, model has " +
                         std::to_string(n));
  }
  if (x.index >> n) throw DimensionError("configuration index out of range");
  return std::visit(overloaded{[&](const IsingChain& m) {
                                 if (m.spins < 3) throw PreconditionError("Ising chain needs N >= 3");
                                 return chain_energy(m, x.index);
                               },
                               [&](const SkModel& m) { return sk_energy(m, x.index); },
                               [&](const PSpinModel& m) { return pspin_energy(m, x.index); }},
                    model);
}

Vector energy_table(const ClassicalModel& model, int max_spins) {
  const int n = spin_count(model);
  if (n > max_spins) {
    throw DimensionError("N = " + std::to_string(n) + " exceeds the dense limit of " +
                         std::to_string(max_spins) + " spins");
  }
  check_spins_fit(n);
  const std::uint32_t dim = 1U << n;
  Vector e(dim);
  for (std::uint32_t x = 0; x < dim; ++x) e(x) = energy(model, SpinConfiguration{x, n});
  return e;
}

bool flip_symmetric(const ClassicalModel& model) {
  return std::visit(overloaded{[](const IsingChain&) { return true; },
                               [](const SkModel& m) { return m.fields.cwiseAbs().maxCoeff() == 0.0; },
                               [](const PSpinModel& m) {
                                 return m.order % 2 == 0 &&
                                        (m.fields.size() == 0 || m.fields.cwiseAbs().maxCoeff() == 0.0);
                               }},
                    model);
}

double BoltzmannTable::partition_function() const { return std::exp(log_z); }

int BoltzmannTable::spins() const { return std::countr_zero(static_cast<std::uint64_t>(pi.size())); }

BoltzmannTable boltzmann(const Vector& energies, double beta) {
  if (!(beta >= 0.0)) throw PreconditionError("beta must be non-negative");
  if (energies.size() == 0) throw DimensionError("empty energy table");
  BoltzmannTable t;
  t.beta = beta;
  t.energies = energies;
  // Shift so the largest Boltzmann exponent is zero.
  const double e_min = energies.minCoeff();
  t.pi = (-beta * (energies.array() - e_min)).exp();
  const double shifted_z = t.pi.sum();
  t.pi /= shifted_z;
  t.log_z = std::log(shifted_z) - beta * e_min;
  t.free_energy = beta > 0.0 ? -t.log_z / beta : -std::numeric_limits<double>::infinity();
  t.pi_min = t.pi.minCoeff();
  if (!(t.pi_min > 0.0)) throw NumericalError("Boltzmann weight underflowed to zero");
  return t;
}

SkModel sample_sk(int spins, DisorderSeed seed, double field_halfwidth) {
  if (spins < 2) throw PreconditionError("SK model needs N >= 2");
  check_spins_fit(spins);
  const CounterRng base = CounterRng(seed.base_seed).stream(seed.instance);
  const CounterRng coupling_rng = base.stream(kCouplingStream);
  const CounterRng field_rng = base.stream(kFieldStream);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(spins));

  SkModel m;
  m.couplings = Matrix::Zero(spins, spins);
  m.fields = Vector::Zero(spins);
  std::uint64_t pair = 0;
  for (int i = 0; i < spins; ++i) {
    for (int j = i + 1; j < spins; ++j, ++pair) {
      const double J = sigma * coupling_rng.normal(pair);
      m.couplings(i, j) = J;
      m.couplings(j, i) = J;
    }
  }
  if (field_halfwidth != 0.0) {
    for (int i = 0; i < spins; ++i) {
      m.fields(i) = field_rng.uniform(static_cast<std::uint64_t>(i), -field_halfwidth, field_halfwidth);
    }
  }
  return m;
}

PSpinModel sample_pspin(int spins, int order, DisorderSeed seed, double field_halfwidth) {
  if (order < 2) throw PreconditionError("p-spin order must be at least 2");
  if (order > spins) throw PreconditionError("p-spin order exceeds N");
  check_spins_fit(spins);
  const CounterRng base = CounterRng(seed.base_seed).stream(seed.instance);
  const CounterRng coupling_rng = base.stream(kCouplingStream);
  const CounterRng field_rng = base.stream(kFieldStream);
  const double sigma =
      std::sqrt(factorial(order) / (2.0 * std::pow(static_cast<double>(spins), order - 1)));

  PSpinModel m;
  m.spins = spins;
  m.order = order;
  std::vector<int> tuple(static_cast<std::size_t>(order));
  for (int a = 0; a < order; ++a) tuple[static_cast<std::size_t>(a)] = a;
  std::uint64_t counter = 0;
  while (true) {
    m.tuples.insert(m.tuples.end(), tuple.begin(), tuple.end());
    m.couplings.push_back(sigma * coupling_rng.normal(counter++));
    // next combination in lexicographic order
    int a = order - 1;
    while (a >= 0 && tuple[static_cast<std::size_t>(a)] == spins - order + a) --a;
    if (a < 0) break;
    ++tuple[static_cast<std::size_t>(a)];
    for (int b = a + 1; b < order; ++b) {
      tuple[static_cast<std::size_t>(b)] = tuple[static_cast<std::size_t>(b - 1)] + 1;
    }
  }
  if (field_halfwidth != 0.0) {
    m.fields = Vector::Zero(spins);
    for (int i = 0; i < spins; ++i) {
      m.fields(i) = field_rng.uniform(static_cast<std::uint64_t>(i), -field_halfwidth, field_halfwidth);
    }
  }
  return m;
}

nlohmann::json to_json(const ClassicalModel& model) {
  using nlohmann::json;
  return std::visit(
      overloaded{[](const IsingChain& m) { return json{{"model", "ising"}, {"N", m.spins}}; },
                 [](const SkModel& m) {
                   json j{{"model", "sk"}, {"N", m.spins()}};
                   json rows = json::array();
                   for (int i = 0; i < m.spins(); ++i) {
                     std::vector<double> row(static_cast<std::size_t>(m.spins()));
                     for (int k = 0; k < m.spins(); ++k) row[static_cast<std::size_t>(k)] = m.couplings(i, k);
                     rows.push_back(row);
                   }
                   j["J"] = rows;
                   j["h"] = std::vector<double>(m.fields.data(), m.fields.data() + m.fields.size());
                   return j;
                 },
                 [](const PSpinModel& m) {
                   json j{{"model", "pspin"}, {"N", m.spins}, {"p", m.order}};
                   json tuples = json::array();
                   for (std::size_t c = 0; c < m.couplings.size(); ++c) {
                     tuples.push_back(std::vector<int>(m.tuples.begin() + static_cast<long>(c * m.order),
                                                       m.tuples.begin() + static_cast<long>((c + 1) * m.order)));
                   }
                   j["tuples"] = tuples;
                   j["J"] = m.couplings;
                   j["h"] = std::vector<double>(m.fields.data(), m.fields.data() + m.fields.size());
                   return j;
                 }},
      model);
}

nlohmann::json to_json(const ClassicalModel& model, DisorderSeed seed) {
  auto j = to_json(model);
  j["seed"] = seed.base_seed;
  j["index"] = seed.instance;
  return j;
}

ClassicalModel model_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("model").get<std::string>();
    const int n = j.at("N").get<int>();
    check_spins_fit(n);
    if (kind == "ising") return IsingChain{n};
    if (kind == "sk") {
      SkModel m;
      m.couplings = Matrix::Zero(n, n);
      m.fields = Vector::Zero(n);
      const auto& rows = j.at("J");
      if (rows.size() != static_cast<std::size_t>(n)) throw ConfigError("SK: J must be N x N");
      for (int i = 0; i < n; ++i) {
        const auto& row = rows.at(static_cast<std::size_t>(i));
        if (row.size() != static_cast<std::size_t>(n)) throw ConfigError("SK: J must be N x N");
        for (int k = 0; k < n; ++k) m.couplings(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
      }
      if (!m.couplings.isApprox(m.couplings.transpose(), 0.0) || m.couplings.diagonal().cwiseAbs().maxCoeff() != 0.0) {
        throw ConfigError("SK: J must be symmetric with zero diagonal");
      }
      if (j.contains("h")) {
        const auto h = j.at("h").get<std::vector<double>>();
        if (h.size() != static_cast<std::size_t>(n)) throw ConfigError("SK: h must have N entries");
        for (int i = 0; i < n; ++i) m.fields(i) = h[static_cast<std::size_t>(i)];
      }
      return m;
    }
    if (kind == "pspin") {
      PSpinModel m;
      m.spins = n;
      m.order = j.at("p").get<int>();
      if (m.order < 2 || m.order > n) throw ConfigError("pspin: need 2 <= p <= N");
      m.couplings = j.at("J").get<std::vector<double>>();
      const auto& tuples = j.at("tuples");
      if (tuples.size() != m.couplings.size()) throw ConfigError("pspin: one tuple per coupling");
      for (const auto& t : tuples) {
        const auto idx = t.get<std::vector<int>>();
        if (idx.size() != static_cast<std::size_t>(m.order)) throw ConfigError("pspin: tuple arity != p");
        for (std::size_t a = 0; a < idx.size(); ++a) {
          if (idx[a] < 0 || idx[a] >= n || (a > 0 && idx[a] <= idx[a - 1])) {
            throw ConfigError("pspin: tuples must be strictly increasing indices in [0, N)");
          }
        }
        m.tuples.insert(m.tuples.end(), idx.begin(), idx.end());
      }
      if (j.contains("h")) {
        const auto h = j.at("h").get<std::vector<double>>();
        if (!h.empty()) {
          if (h.size() != static_cast<std::size_t>(n)) throw ConfigError("pspin: h must have N entries");
          m.fields = Eigen::Map<const Vector>(h.data(), n);
        }
      }
      return m;
    }
    throw ConfigError("unknown model type '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model JSON: ") + e.what());
  }
}

void write_energy_csv(std::ostream& out, const Vector& energies) {
  out << "index,energy\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < energies.size(); ++i) out << i << ',' << energies(i) << '\n';
}

}  // namespace qmcmc::models

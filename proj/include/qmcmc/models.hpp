#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qmcmc/linalg.hpp"

namespace qmcmc::models {

/// Dense objects are 2^N x 2^N; this is the default ceiling on N.
inline constexpr int kDefaultMaxSpins = 14;

/// A classical configuration of `spins` Ising variables packed into an index.
/// Bit i clear means x_i = +1, bit i set means x_i = -1.
struct SpinConfiguration {
  std::uint32_t index = 0;
  int spins = 0;

  int spin(int i) const { return ((index >> i) & 1U) ? -1 : +1; }
  std::vector<int> values() const;
  static SpinConfiguration from_values(std::span<const int> values);
};

inline int spin_at(std::uint32_t index, int i) { return ((index >> i) & 1U) ? -1 : +1; }
int hamming_distance(std::uint32_t a, std::uint32_t b);

/// H = -sum_i x_i x_{i+1}, periodic.
struct IsingChain {
  int spins = 0;
};

/// H = -sum_{i<j} J_ij x_i x_j + sum_i h_i x_i.
struct SkModel {
  Matrix couplings;  // symmetric, zero diagonal
  Vector fields;
  int spins() const { return static_cast<int>(fields.size()); }
};

/// H = -sum_{i1<..<ip} J_{i1..ip} x_i1 .. x_ip + sum_i h_i x_i.
struct PSpinModel {
  int spins = 0;
  int order = 3;
  std::vector<int> tuples;       // flattened, `order` indices per coupling, lexicographic
  std::vector<double> couplings;
  Vector fields;                 // empty means no longitudinal field
  std::size_t coupling_count() const { return couplings.size(); }
};

using ClassicalModel = std::variant<IsingChain, SkModel, PSpinModel>;

int spin_count(const ClassicalModel& model);
std::string model_name(const ClassicalModel& model);

/// Energy of one configuration.
double energy(const ClassicalModel& model, SpinConfiguration x);

/// Energies of all 2^N configurations, entry j for configuration j.
Vector energy_table(const ClassicalModel& model, int max_spins = kDefaultMaxSpins);

/// True when H(x) == H(~x) for every configuration.
bool flip_symmetric(const ClassicalModel& model);

struct BoltzmannTable {
  double beta = 0.0;
  Vector energies;
  Vector pi;
  double log_z = 0.0;        // ln Z
  double free_energy = 0.0;  // -ln(Z)/beta; -inf at beta = 0
  double pi_min = 0.0;

  double partition_function() const;
  int spins() const;
};

BoltzmannTable boltzmann(const Vector& energies, double beta);

/// Instance i of an ensemble draws from the stream keyed by (base_seed, i).
struct DisorderSeed {
  std::uint64_t base_seed = 0;
  std::uint64_t instance = 0;
};

/// J_ij ~ Normal(0, 1/N), h_i ~ Uniform(-w, w).
SkModel sample_sk(int spins, DisorderSeed seed, double field_halfwidth = 0.25);

/// One Normal(0, p!/(2 N^{p-1})) coupling per increasing p-tuple. Optional
/// uniform longitudinal fields (off by default).
PSpinModel sample_pspin(int spins, int order, DisorderSeed seed, double field_halfwidth = 0.0);

nlohmann::json to_json(const ClassicalModel& model);
nlohmann::json to_json(const ClassicalModel& model, DisorderSeed seed);
ClassicalModel model_from_json(const nlohmann::json& j);

/// `index,energy` rows.
void write_energy_csv(std::ostream& out, const Vector& energies);

}  // namespace qmcmc::models

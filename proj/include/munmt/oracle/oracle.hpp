#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "munmt/common/rng.hpp"

// Exact checks of the EM lower bounds on a finite three-language space where
// every "sentence" is a single symbol. Everything is enumerated at 64 bits.
namespace munmt::oracle {

inline constexpr int kMaxSupport = 8;

// P(x, y, z) stored densely, x-major.
struct ToyJoint {
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> p;

  double operator()(int x, int y, int z) const { return p[(static_cast<std::size_t>(x) * ny + y) * nz + z]; }
  double& at(int x, int y, int z) { return p[(static_cast<std::size_t>(x) * ny + y) * nz + z]; }

  // Sum_c P(c) P(x|c) P(y|c) P(z|c), with each language's values split into
  // disjoint per-concept blocks so that any one variable pins the concept and
  // the other two become independent. All tables are Dirichlet(1) draws.
  static ToyJoint random(Rng& rng, int nx, int ny, int nz, int concepts);
  // Random sizes in [2, 8] and a random concept count.
  static ToyJoint random(Rng& rng);
  // One concept per value, each language a bijective rendering of it.
  static ToyJoint deterministic(Rng& rng, int n);
  static ToyJoint uniform(int nx, int ny, int nz);
  // Arbitrary table; throws unless non-negative and summing to 1 within 1e-12.
  static ToyJoint from_table(int nx, int ny, int nz, std::vector<double> p);

  void validate() const;
  double total() const;
};

// Marginals and pairwise tables, all read off the joint by summation.
struct Marginals {
  explicit Marginals(const ToyJoint& j);

  std::vector<double> x, y, z;
  std::vector<double> xy, xz, yz;  // row-major [first][second]

  double pxy(int a, int b) const { return xy[static_cast<std::size_t>(a) * ny + b]; }
  double pxz(int a, int c) const { return xz[static_cast<std::size_t>(a) * nz + c]; }
  double pyz(int b, int c) const { return yz[static_cast<std::size_t>(b) * nz + c]; }

  int nx, ny, nz;
};

// A conditional table q(outcome | given); rows sum to 1.
struct QDistribution {
  int given = 0;
  int outcomes = 0;
  std::vector<double> q;

  double operator()(int g, int o) const { return q[static_cast<std::size_t>(g) * outcomes + o]; }
  void validate() const;

  // The joint's own conditionals.
  static QDistribution posterior_yz_given_x(const ToyJoint& j);  // outcome index y * nz + z
  static QDistribution z_given_x(const ToyJoint& j);
  static QDistribution z_given_y(const ToyJoint& j);
  // Uniform rows.
  static QDistribution uniform(int given, int outcomes);
  // Dirichlet(1) rows. With a mask, row g only puts mass where mask(g, o) is set.
  static QDistribution random(Rng& rng, int given, int outcomes, const std::vector<char>& mask = {});
  // Row g is one-hot at its argmax (lowest index on ties).
  QDistribution mode() const;
};

std::vector<char> support_yz_given_x(const ToyJoint& j);  // P(x, y, z) > 0
std::vector<char> support_z_given_x(const ToyJoint& j);   // P(x, z) > 0
std::vector<char> support_z_given_y(const ToyJoint& j);   // P(y, z) > 0

struct StructuralReport {
  double max_deviation = 0;  // over P(x|y,z) vs P(x|y), P(x|z), sqrt(P(x|y) P(x|z))
  double max_independence_gap = 0;  // |P(x,y|z) - P(x|z) P(y|z)| and the two rotations
  std::int64_t cells = 0;           // cells with P(y,z) > 0
};

StructuralReport check_structural_identities(const ToyJoint& j);

// Sum over observations of log sum_{y,z} P(x|y,z) P(y,z). -inf for a
// zero-probability observation; 0 for none.
double exact_marginal_loglik(const ToyJoint& j, const std::vector<int>& xs);
// Same quantity by summing the joint directly.
double direct_marginal_loglik(const ToyJoint& j, const std::vector<int>& xs);

// Sum over observations of E_q[log P(x|y,z) + log P(y,z)] + H(q(.,.|x)).
double elbo_mono(const ToyJoint& j, const QDistribution& q_yz_given_x, const std::vector<int>& xs);

// The same bound with the first expectation split through the square-root
// identity: 1/2 E_q(y|x) log P(x|y) + 1/2 E_q(z|x) log P(x|z). The unweighted
// variant drops both halves (and so counts the reconstruction term twice).
struct MonoDecomposition {
  double weighted = 0;
  double unweighted = 0;
};
MonoDecomposition elbo_mono_decomposed(const ToyJoint& j, const QDistribution& q_yz_given_x,
                                       const std::vector<int>& xs);

using Pair = std::pair<int, int>;

// All (x, y) with P(x, y) > 0.
std::vector<Pair> supported_pairs(const ToyJoint& j);
std::vector<int> supported_xs(const ToyJoint& j);

struct AuxBound {
  double lhs = 0;    // sum of log E_z P(x, y | z) = log P(x, y)
  double rhs = 0;    // the four expectation terms
  double slack = 0;  // sum of H(q(z|x,y)) - E_q log P(z) at the exact posterior
};

// Sum over pairs of E_q(z|y) log P(x|z) + E_q(z|x) log P(y|z)
//   + E_q(z|y) log P(z) + E_q(z|x) log P(z), against log P(x, y).
AuxBound elbo_aux(const ToyJoint& j, const QDistribution& q_z_given_x, const QDistribution& q_z_given_y,
                  const std::vector<Pair>& pairs);

// Largest per-pair |cross-translation terms - agreement terms|, where the
// agreement side carries the -E log P(z) corrections and the log P(x) + log P(y)
// constants. With drop_prior_corrections the -E log P(z) terms are left out.
double agreement_identity_gap(const ToyJoint& j, const QDistribution& q_z_given_x, const QDistribution& q_z_given_y,
                              const std::vector<Pair>& pairs, bool drop_prior_corrections = false);

struct DecompositionReport {
  double max_gap = 0;
  std::int64_t checked = 0;
  std::int64_t skipped = 0;  // P(x) = 0 or P(x, y) = 0
};

// log P(x, y) against log P(y|x) + log P(x), with P(y|x) taken through the
// third language as sum_z P(y|z) P(z|x).
DecompositionReport supervised_decomposition_check(const ToyJoint& j, const std::vector<Pair>& pairs);

// Relabels y by perm (new label = perm[old]).
ToyJoint relabel_y(const ToyJoint& j, const std::vector<int>& perm);

// Moves eps of mass onto random cells and renormalizes.
ToyJoint perturb(const ToyJoint& j, Rng& rng, double eps);

struct CheckResult {
  std::string name;
  std::int64_t trials = 0;
  double max_gap = 0;    // the checked quantity; for bounds, the largest violation (0 if none)
  double threshold = 0;  // passes when max_gap <= threshold (or > threshold for negative controls)
  bool negative_control = false;
  bool passed = false;
  double extra = 0;  // check-specific figure (mode-approximation slack, mean decomposition difference, ...)
  std::string note;

  std::string to_json() const;
};

struct SuiteConfig {
  int trials = 1000;
  std::uint64_t seed = 20240601;
  double identity_tol = 1e-12;
  double bound_tol = 1e-9;
};

// Runs every check over cfg.trials seeded random joints.
std::vector<CheckResult> run_suite(const SuiteConfig& cfg = {});

}  // namespace munmt::oracle

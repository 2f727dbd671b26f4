#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "knot/label_space.hpp"
#include "knot/prob.hpp"

namespace knot {

struct SinkhornConfig {
  double epsilon = 1e-3;
  int max_iters = 5000;
  // Sup-norm threshold on the change of both potentials between sweeps; the
  // plan's marginal error must also be below it. The loop also counts as
  // converged once the plan matches both marginals to rounding; beyond that
  // point only potentials of near-empty labels move.
  double tol = 1e-9;
  // Start from a large blur and anneal geometrically down to epsilon before the
  // measured loop; the final loop still runs at epsilon until tol is met.
  bool eps_scaling = true;
  // Follow each sweep with a Newton step on the semi-dual in g. Same fixed
  // point; without it small-epsilon solves stall far from feasibility.
  bool newton = true;

  void validate() const;
};

struct DualPotentials {
  std::vector<double> f;  // student side (first argument)
  std::vector<double> g;  // teacher side (second argument)
  bool converged = false;
  int iters_used = 0;
};

/// Everything recovered from one solve. The plan is
///   pi_ij = mu_i nu_j exp((f_i + g_j - C_ij) / eps).
struct SinkhornSolution {
  DualPotentials potentials;
  Matrix plan;
  double transport_cost = 0.0;  // <pi, C>
  double value = 0.0;           // <pi, C> + eps KL(pi | mu x nu)
};

/// Log-domain Sinkhorn. mu and nu must be strictly positive (clamp first);
/// `warm` optionally seeds the potentials. Throws std::invalid_argument on
/// shape errors and std::runtime_error on non-finite intermediates.
/// When built with KNOT_CHECK_INVARIANTS, also throws std::logic_error if the
/// transport term leaves [0, C_M].
SinkhornSolution sinkhorn_solve(const Distribution& mu, const Distribution& nu,
                                const Matrix& cost, const SinkhornConfig& cfg,
                                const DualPotentials* warm = nullptr);

/// True when the library was built with KNOT_CHECK_INVARIANTS.
bool sinkhorn_invariants_checked();

DualPotentials sinkhorn_potentials(const Distribution& mu, const Distribution& nu,
                                   const Matrix& cost, const SinkhornConfig& cfg);

double sinkhorn_distance(const Distribution& mu, const Distribution& nu, const Matrix& cost,
                         const SinkhornConfig& cfg);

/// Gradient of the entropic OT value with respect to mu, centered to zero mean.
std::vector<double> sinkhorn_grad_student(const Distribution& mu, const Distribution& nu,
                                          const Matrix& cost, const SinkhornConfig& cfg);

/// Closed-form 1-Wasserstein distance on a one-dimensional label space.
double w1_exact_1d(const LabelSpace& space, const Distribution& mu, const Distribution& nu);

/// KL(p || q) with p the student, q the teacher target.
double kl_divergence(const Distribution& p, const Distribution& q);
/// Centered d KL(p || q) / dp. Zero entries of p are floored at kProbFloor
/// inside the logarithm.
std::vector<double> kl_grad_student(const Distribution& p, const Distribution& q);

enum class Divergence { Sinkhorn, KL };

std::string_view to_string(Divergence d);
Divergence parse_divergence(std::string_view s);

struct DivergenceEval {
  double value = 0.0;
  std::vector<double> grad;  // centered, over student labels
};

/// Value and student-side gradient in one pass. The teacher is clamped at
/// kProbFloor, and for Sinkhorn the student too; `warm` (Sinkhorn only) is
/// read and then overwritten with the new potentials.
DivergenceEval evaluate_divergence(Divergence d, const Distribution& student,
                                   const Distribution& teacher, const Matrix& cost,
                                   const SinkhornConfig& cfg, DualPotentials* warm = nullptr);

void center(std::vector<double>& v);

}  // namespace knot

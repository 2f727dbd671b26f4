#include "knot/divergences.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace knot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kLevelIters = 50;
constexpr double kLevelTol = 1e-6;
constexpr int kWarmBudget = 20;
constexpr double kNewtonFloor = 1e-13;
constexpr double kRoundoff = 1e-14;
// Plan entries below this fraction of both their row and column mass do not
// link blocks.
constexpr double kBlockCut = 1e-13;
constexpr int kBalanceSweeps = 200;
// Rounding in (f + g - C) / eps is amplified by up to C_M / eps, so plan
// marginals cannot be resolved more finely than this. Once they are, sweeps
// only move the potentials of labels with negligible mass.
double marginal_floor(const Matrix& cost, double eps) {
  return 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + cost.max_entry() / eps);
}

void check_shapes(const Distribution& mu, const Distribution& nu, const Matrix& cost) {
  if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
    throw std::invalid_argument("sinkhorn: cost is " + std::to_string(cost.rows()) + "x" +
                                std::to_string(cost.cols()) + " but marginals have sizes " +
                                std::to_string(mu.size()) + " and " + std::to_string(nu.size()));
  }
}

std::vector<double> strict_log(const Distribution& p, const char* which) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0)) {
      throw std::invalid_argument(std::string("sinkhorn: ") + which +
                                  " has a zero entry; clamp it first");
    }
    out[i] = std::log(p[i]);
  }
  return out;
}

// One half-sweep: out_i = -eps * LSE_j(log_w_j + (other_j - C(i,j)) / eps).
// `transposed` reads the cost as C(j,i) so the same routine updates g.
void soft_c_transform(std::vector<double>& out, const std::vector<double>& other,
                      const std::vector<double>& log_w, const Matrix& cost, double eps,
                      bool transposed, std::vector<double>& scratch) {
  const std::size_t n_out = out.size();
  const std::size_t n_in = other.size();
  scratch.resize(n_in);
  for (std::size_t i = 0; i < n_out; ++i) {
    double m = -kInf;
    for (std::size_t j = 0; j < n_in; ++j) {
      const double c = transposed ? cost(j, i) : cost(i, j);
      scratch[j] = log_w[j] + (other[j] - c) / eps;
      m = std::max(m, scratch[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n_in; ++j) s += std::exp(scratch[j] - m);
    out[i] = -eps * (m + std::log(s));
  }
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double sup_norm(const std::vector<double>& a) {
  double d = 0.0;
  for (double x : a) d = std::max(d, std::abs(x));
  return d;
}

// Value of the semi-dual  F(g) = <mu, T(g)> + <nu, g>  where T is the row
// soft c-transform; writes T(g) into f.
double semi_dual(std::vector<double>& f, const std::vector<double>& g,
                 const std::vector<double>& log_nu, const std::vector<double>& mu,
                 const Matrix& cost, double eps, std::vector<double>& scratch) {
  soft_c_transform(f, g, log_nu, cost, eps, false, scratch);
  double v = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) v += mu[i] * f[i];
  for (std::size_t j = 0; j < g.size(); ++j) v += std::exp(log_nu[j]) * g[j];
  return v;
}

// Newton step on the concave semi-dual in g. The Hessian is
//   -(1/eps) [diag(colsum pi) - sum_i mu_i P_i P_i^T],  P_ij = pi_ij / mu_i,
// singular along the constant direction and numerically singular along
// directions the kernel no longer sees, so it is pseudo-inverted.
// A step must raise the semi-dual and shrink the column-marginal error;
// accepting on either alone lets rounding noise walk g off to huge values.
enum class NewtonResult { Stepped, Exact, Stalled };

NewtonResult newton_step(std::vector<double>& f, std::vector<double>& g, const std::vector<double>& log_mu,
                 const std::vector<double>& log_nu, const Matrix& cost, double eps,
                 std::vector<double>& scratch) {
  const std::size_t n = f.size();
  const std::size_t m = g.size();
  std::vector<double> mu(n);
  for (std::size_t i = 0; i < n; ++i) mu[i] = std::exp(log_mu[i]);

  const double base = semi_dual(f, g, log_nu, mu, cost, eps, scratch);
  Eigen::MatrixXd P(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      P(i, j) = std::exp(log_nu[j] + (f[i] + g[j] - cost(i, j)) / eps);
    }
  }
  Eigen::VectorXd mu_v = Eigen::Map<const Eigen::VectorXd>(mu.data(), n);
  Eigen::VectorXd col = P.transpose() * mu_v;
  Eigen::VectorXd grad(m);
  for (std::size_t j = 0; j < m; ++j) grad(j) = std::exp(log_nu[j]) - col(j);
  const double grad_norm = grad.lpNorm<1>();
  if (grad_norm < kNewtonFloor) return NewtonResult::Exact;

  Eigen::MatrixXd curv = Eigen::MatrixXd(col.asDiagonal()) - P.transpose() * mu_v.asDiagonal() * P;
  curv /= eps;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(curv);
  const auto& evals = es.eigenvalues();
  const double cutoff = 1e-13 * std::max(evals.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd coeffs = es.eigenvectors().transpose() * grad;
  for (Eigen::Index k = 0; k < coeffs.size(); ++k) {
    coeffs(k) = evals(k) > cutoff ? coeffs(k) / evals(k) : 0.0;
  }
  const Eigen::VectorXd step = es.eigenvectors() * coeffs;

  std::vector<double> trial_g(m);
  std::vector<double> trial_f(n);
  for (double t = 1.0; t > 1e-6; t *= 0.5) {
    for (std::size_t j = 0; j < m; ++j) trial_g[j] = g[j] + t * step(j);
    const double v = semi_dual(trial_f, trial_g, log_nu, mu, cost, eps, scratch);
    if (!std::isfinite(v)) continue;
    double trial_norm = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        c += mu[i] * std::exp(log_nu[j] + (trial_f[i] + trial_g[j] - cost(i, j)) / eps);
      }
      trial_norm += std::abs(std::exp(log_nu[j]) - c);
    }
    // Near the optimum the value gain drops below rounding; the marginal
    // error then decides alone.
    const bool flat = std::abs(v - base) <= kRoundoff * std::max(1.0, std::abs(base));
    if ((v > base || flat) && trial_norm < grad_norm) {
      g = trial_g;
      f = trial_f;
      return NewtonResult::Stepped;
    }
    if (flat) return NewtonResult::Exact;
  }
  return NewtonResult::Stalled;
}

// L1 row-marginal error of the plan; the columns are exact right after a
// g update.
double row_error(const std::vector<double>& f, const std::vector<double>& g,
                 const std::vector<double>& log_mu, const std::vector<double>& log_nu,
                 const Matrix& cost, double eps) {
  double err = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      row += std::exp(log_mu[i] + log_nu[j] + (f[i] + g[j] - cost(i, j)) / eps);
    }
    err += std::abs(std::exp(log_mu[i]) - row);
  }
  return err;
}

double marginal_error(const std::vector<double>& f, const std::vector<double>& g,
                      const std::vector<double>& log_mu, const std::vector<double>& log_nu,
                      const Matrix& cost, double eps) {
  std::vector<double> col(g.size(), 0.0);
  double err = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double pij = std::exp(log_mu[i] + log_nu[j] + (f[i] + g[j] - cost(i, j)) / eps);
      row += pij;
      col[j] += pij;
    }
    err += std::abs(std::exp(log_mu[i]) - row);
  }
  for (std::size_t j = 0; j < g.size(); ++j) err += std::abs(std::exp(log_nu[j]) - col[j]);
  return err;
}

// When the plan splits into blocks joined only by entries too small to
// register in any marginal (e.g. mu == nu at small eps gives a diagonal plan),
// sweeps cannot tell how f + g is divided between the two sides of each block.
// The exact optimum balances the flow between blocks: the mass leaving a
// block through the tiny entries equals the mass entering it. Those entries
// are still representable as logarithms, so the balance is solved there.
void balance_blocks(std::vector<double>& f, std::vector<double>& g,
                    const std::vector<double>& log_mu, const std::vector<double>& log_nu,
                    const Matrix& cost, double eps) {
  const std::size_t n = f.size();
  const std::size_t m = g.size();
  auto log_pi = [&](std::size_t i, std::size_t j) {
    return log_mu[i] + log_nu[j] + (f[i] + g[j] - cost(i, j)) / eps;
  };

  // Union-find over rows 0..n-1 and columns n..n+m-1.
  std::vector<std::size_t> parent(n + m);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  const double cut = std::log(kBlockCut);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double l = log_pi(i, j);
      if (l - log_mu[i] >= cut || l - log_nu[j] >= cut) parent[find(i)] = find(n + j);
    }
  }
  std::vector<std::size_t> block(n + m);
  std::vector<std::size_t> roots;
  for (std::size_t a = 0; a < n + m; ++a) {
    const std::size_t r = find(a);
    auto it = std::find(roots.begin(), roots.end(), r);
    block[a] = static_cast<std::size_t>(it - roots.begin());
    if (it == roots.end()) roots.push_back(r);
  }
  if (roots.size() < 2) return;

  const auto f0 = f;
  const auto g0 = g;
  const double before = marginal_error(f, g, log_mu, log_nu, cost, eps);
  const double scale = 1.0 + std::max(sup_norm(f), sup_norm(g));
  for (int sweep = 0; sweep < kBalanceSweeps; ++sweep) {
    double moved = 0.0;
    for (std::size_t b = 0; b < roots.size(); ++b) {
      double out = -kInf, in = -kInf;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          const bool row_in = block[i] == b;
          const bool col_in = block[n + j] == b;
          if (row_in == col_in) continue;
          const double l = log_pi(i, j);
          double& acc = row_in ? out : in;
          acc = std::max(acc, l) + std::log1p(std::exp(-std::abs(acc - l)));
        }
      }
      if (!std::isfinite(out) || !std::isfinite(in)) continue;
      const double shift = 0.5 * eps * (in - out);
      for (std::size_t i = 0; i < n; ++i)
        if (block[i] == b) f[i] += shift;
      for (std::size_t j = 0; j < m; ++j)
        if (block[n + j] == b) g[j] -= shift;
      moved = std::max(moved, std::abs(shift));
    }
    if (moved < kRoundoff * scale) break;
  }
  // Blocks that were not truly separate would now carry visible flow.
  const double after = marginal_error(f, g, log_mu, log_nu, cost, eps);
  if (!(after <= std::max(2.0 * before, marginal_floor(cost, eps)))) {
    f = f0;
    g = g0;
  }
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
  if (max_iters < 1) throw std::invalid_argument("sinkhorn: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn: tol must be > 0");
}

void center(std::vector<double>& v) {
  if (v.empty()) return;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

SinkhornSolution sinkhorn_solve(const Distribution& mu, const Distribution& nu,
                                const Matrix& cost, const SinkhornConfig& cfg,
                                const DualPotentials* warm) {
  cfg.validate();
  check_shapes(mu, nu, cost);
  const auto log_mu = strict_log(mu, "mu");
  const auto log_nu = strict_log(nu, "nu");
  const double eps = cfg.epsilon;

  std::vector<double> scratch;
  const double floor = marginal_floor(cost, eps);
  auto anneal = [&](DualPotentials& pot) {
    // Each level is solved loosely so the next, sharper level starts inside
    // the region where Newton steps are reliable.
    std::vector<double> f_prev;
    double blur = std::max(cost.max_entry(), eps);
    while (blur > eps) {
      for (int k = 0; k < kLevelIters; ++k) {
        f_prev = pot.f;
        soft_c_transform(pot.f, pot.g, log_nu, cost, blur, false, scratch);
        soft_c_transform(pot.g, pot.f, log_mu, cost, blur, true, scratch);
        if (cfg.newton) newton_step(pot.f, pot.g, log_mu, log_nu, cost, blur, scratch);
        if (sup_diff(pot.f, f_prev) < kLevelTol * blur) break;
      }
      blur *= 0.5;
    }
  };
  // A warm start gives up as soon as Newton stalls: potentials from a
  // different (mu, nu) can sit where plain sweeps only creep.
  auto iterate = [&](DualPotentials& pot, int budget, bool give_up_on_stall) {
    std::vector<double> f_prev;
    std::vector<double> g_prev;
    for (int it = 1; it <= budget; ++it) {
      f_prev = pot.f;
      g_prev = pot.g;
      soft_c_transform(pot.f, pot.g, log_nu, cost, eps, false, scratch);
      soft_c_transform(pot.g, pot.f, log_mu, cost, eps, true, scratch);
      if (!all_finite(pot.f) || !all_finite(pot.g)) {
        throw std::runtime_error("sinkhorn: non-finite potentials (cost / epsilon too large?)");
      }
      ++pot.iters_used;
      // Near the optimum Newton steps shrink the potential change faster than
      // the marginal error, which at small eps is larger by about 1 / eps.
      const double err = row_error(pot.f, pot.g, log_mu, log_nu, cost, eps);
      if ((std::max(sup_diff(pot.f, f_prev), sup_diff(pot.g, g_prev)) < cfg.tol && err < cfg.tol) ||
          err < floor) {
        pot.converged = true;
        return;
      }
      if (cfg.newton && newton_step(pot.f, pot.g, log_mu, log_nu, cost, eps, scratch) ==
                            NewtonResult::Stalled &&
          give_up_on_stall) {
        return;
      }
    }
  };

  DualPotentials pot;
  const bool warm_ok = warm != nullptr && warm->f.size() == mu.size() &&
                       warm->g.size() == nu.size() && all_finite(warm->f) &&
                       all_finite(warm->g);
  if (warm_ok) {
    // A stale start that does not settle quickly is abandoned for a cold solve.
    pot.f = warm->f;
    pot.g = warm->g;
    iterate(pot, std::min(cfg.max_iters, kWarmBudget), true);
  }
  if (!pot.converged) {
    const int spent = pot.iters_used;
    pot = DualPotentials{};
    pot.f.assign(mu.size(), 0.0);
    pot.g.assign(nu.size(), 0.0);
    if (cfg.eps_scaling) anneal(pot);
    iterate(pot, std::max(cfg.max_iters - spent, 1), false);
    pot.iters_used += spent;
  }

  if (pot.converged) balance_blocks(pot.f, pot.g, log_mu, log_nu, cost, eps);

  // Duals are unique up to f + c, g - c.
  const double shift =
      std::accumulate(pot.f.begin(), pot.f.end(), 0.0) / static_cast<double>(pot.f.size());
  for (double& x : pot.f) x -= shift;
  for (double& x : pot.g) x += shift;

  SinkhornSolution sol;
  sol.plan = Matrix(mu.size(), nu.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t j = 0; j < nu.size(); ++j) {
      const double pij = std::exp(log_mu[i] + log_nu[j] + (pot.f[i] + pot.g[j] - cost(i, j)) / eps);
      sol.plan(i, j) = pij;
      mass += pij;
      sol.transport_cost += pij * cost(i, j);
    }
  }
  // Dual objective: its error is second order in the potentials' error, where
  // <pi, f + g> would inherit the marginal error at first order.
  double dual = -eps * (mass - 1.0);
  for (std::size_t i = 0; i < mu.size(); ++i) dual += mu[i] * pot.f[i];
  for (std::size_t j = 0; j < nu.size(); ++j) dual += nu[j] * pot.g[j];
  sol.value = dual;
  sol.potentials = std::move(pot);

#ifdef KNOT_CHECK_INVARIANTS
  const double slack = 1e-9 + 1e-9 * cost.max_entry();
  if (sol.transport_cost < -slack || sol.transport_cost > cost.max_entry() * mass + slack) {
    throw std::logic_error("sinkhorn: transport term " + std::to_string(sol.transport_cost) +
                           " outside [0, C_M]");
  }
#endif
  return sol;
}

bool sinkhorn_invariants_checked() {
#ifdef KNOT_CHECK_INVARIANTS
  return true;
#else
  return false;
#endif
}

DualPotentials sinkhorn_potentials(const Distribution& mu, const Distribution& nu,
                                   const Matrix& cost, const SinkhornConfig& cfg) {
  return sinkhorn_solve(mu, nu, cost, cfg).potentials;
}

double sinkhorn_distance(const Distribution& mu, const Distribution& nu, const Matrix& cost,
                         const SinkhornConfig& cfg) {
  return sinkhorn_solve(mu, nu, cost, cfg).value;
}

std::vector<double> sinkhorn_grad_student(const Distribution& mu, const Distribution& nu,
                                          const Matrix& cost, const SinkhornConfig& cfg) {
  auto f = sinkhorn_solve(mu, nu, cost, cfg).potentials.f;
  center(f);
  return f;
}

double w1_exact_1d(const LabelSpace& space, const Distribution& mu, const Distribution& nu) {
  if (space.dim() != 1) {
    throw std::invalid_argument("w1_exact_1d: label space '" + space.name() +
                                "' is not one-dimensional");
  }
  if (mu.size() != space.size() || nu.size() != space.size()) {
    throw std::invalid_argument("w1_exact_1d: distribution length does not match space");
  }
  std::vector<std::size_t> order(space.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return space.coords()[a][0] < space.coords()[b][0];
  });
  double cdf_mu = 0.0;
  double cdf_nu = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    cdf_mu += mu[order[k]];
    cdf_nu += nu[order[k]];
    const double gap = space.coords()[order[k + 1]][0] - space.coords()[order[k]][0];
    total += std::abs(cdf_mu - cdf_nu) * gap;
  }
  return total;
}

double kl_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!(q[i] > 0.0)) return kInf;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

std::vector<double> kl_grad_student(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_grad_student: size mismatch");
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(q[i] > 0.0)) {
      throw std::invalid_argument("kl_grad_student: teacher has a zero entry; clamp it first");
    }
    g[i] = std::log(std::max(p[i], kProbFloor) / q[i]) + 1.0;
  }
  center(g);
  return g;
}

std::string_view to_string(Divergence d) {
  return d == Divergence::Sinkhorn ? "sinkhorn" : "kl";
}

Divergence parse_divergence(std::string_view s) {
  if (s == "sinkhorn") return Divergence::Sinkhorn;
  if (s == "kl") return Divergence::KL;
  throw std::invalid_argument("unknown divergence '" + std::string(s) +
                              "' (expected sinkhorn or kl)");
}

DivergenceEval evaluate_divergence(Divergence d, const Distribution& student,
                                   const Distribution& teacher, const Matrix& cost,
                                   const SinkhornConfig& cfg, DualPotentials* warm) {
  DivergenceEval out;
  if (d == Divergence::KL) {
    const auto q = clamp_simplex(teacher.values());
    out.value = kl_divergence(student, q);
    out.grad = kl_grad_student(student, q);
    return out;
  }
  const auto mu = clamp_simplex(student.values());
  const auto nu = clamp_simplex(teacher.values());
  auto sol = sinkhorn_solve(mu, nu, cost, cfg, warm);
  out.value = sol.value;
  out.grad = sol.potentials.f;
  center(out.grad);
  if (warm != nullptr) *warm = std::move(sol.potentials);
  return out;
}

}  // namespace knot

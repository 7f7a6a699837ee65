#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sticky/measure.hpp"
#include "sticky/transport.hpp"

// Minimizing-movement scheme for the entropy E w.r.t. mu: one step solves
//   min_rho  W^2(rho, prev)/(2 tau) + E(rho).
// The scalable solver works in plan space with the first marginal hard-constrained to
// prev and the entropy absorbed through its KL-proximal map. With working entropic
// parameter e and plan reference mu (x) mu, first-order optimality of
//   min_sigma  e KL(sigma | s) + 2 tau KL(sigma | mu)
// gives the geometric-mean proximal  sigma = s^kappa * mu^(1-kappa),  kappa = e/(e+2tau),
// i.e. density(sigma) = density(s)^kappa. The formula is validated against the
// brute-force oracle in the tests before anything downstream trusts it.

namespace sticky {

enum class JkoSolver { EntropicScaling, BruteForceOracle };

struct JkoConfig {
  double tau = 1e-3;               // time step
  double sinkhorn_epsilon = 5e-2;  // schedule start (length^2)
  double epsilon_decay = 0.5;      // geometric schedule factor
  double epsilon_floor = 1e-4;     // schedule floor (length^2)
  double drift_tol = 1e-8;         // continuation stop: L1 output drift per halving
  double epsilon_min = 1e-9;       // hard continuation stop (length^2)
  double inner_tol = 1e-10;        // marginal fixed-point residual, L1 mass
  int max_inner_iter = 4000;       // per epsilon stage
  JkoSolver solver = JkoSolver::EntropicScaling;
  double mu_regularization = 0.0;  // eps_mu > 0: mollified reference measure
  int w2_exact_limit = 512;        // trajectory records use the exact LP below this

  void validate() const {
    if (!(tau > 0)) throw std::invalid_argument("JkoConfig: tau must be positive");
    if (!(sinkhorn_epsilon > 0)) throw std::invalid_argument("JkoConfig: sinkhorn_epsilon <= 0");
    if (!(epsilon_floor > 0)) throw std::invalid_argument("JkoConfig: epsilon_floor <= 0");
    if (!(epsilon_decay > 0 && epsilon_decay < 1))
      throw std::invalid_argument("JkoConfig: epsilon_decay must be in (0,1)");
    if (!(inner_tol > 0)) throw std::invalid_argument("JkoConfig: inner_tol <= 0");
  }
};

// Epsilons above are per unit diam^2 of the canonical domain; rescale for a grid.
inline JkoConfig default_jko_config(const Discretization& d, double tau) {
  JkoConfig cfg;
  cfg.tau = tau;
  double d2 = d.diameter() * d.diameter();
  cfg.sinkhorn_epsilon *= d2;
  cfg.epsilon_floor *= d2;
  cfg.epsilon_min *= d2;
  return cfg;
}

struct JkoStepResult {
  DecomposedMeasure next;
  TransportPlan plan;  // rows = prev sites, columns = next sites (forward plan)
  bool converged = true;
  double marginal_residual = 0.0;
  double final_epsilon = 0.0;
  int iterations = 0;
};

// Scaling potentials carried across steps of a trajectory.
struct JkoWarmState {
  Eigen::VectorXd f, g;
  bool valid = false;
};

namespace detail {

struct ScalingProblem {
  Eigen::VectorXd src_mass;    // row marginals (fixed)
  Eigen::VectorXd tgt_weight;  // target mu-weights (entropy reference)
  const Eigen::MatrixXd* cost = nullptr;
  Eigen::MatrixXd cost_sub;  // used when the target set is a subset of sites
};

// One stage of alternating scaling at fixed epsilon. Returns the row residual reached.
// The column update applies the KL-proximal in closed form; an Aitken jump accelerates
// the slow g-relaxation mode that appears for epsilon << tau.
inline double scaling_stage(const ScalingProblem& p, double eps, double tau, int max_iter,
                            double tol, Eigen::VectorXd& f, Eigen::VectorXd& g, int& iter_count) {
  const Eigen::MatrixXd& C = *p.cost;
  const int m = static_cast<int>(p.src_mass.size());
  const int n = static_cast<int>(p.tgt_weight.size());
  const double inf = std::numeric_limits<double>::infinity();

  Eigen::VectorXd log_a(m), log_w(n);
  for (int k = 0; k < m; ++k)
    log_a[k] = p.src_mass[k] > 0 ? std::log(p.src_mass[k]) : -inf;
  for (int l = 0; l < n; ++l) log_w[l] = std::log(p.tgt_weight[l]);

  const double prox_factor = 2.0 * tau * eps / (eps + 2.0 * tau);
  Eigen::VectorXd S(n), r(m), tmp;
  double res = inf;
  double last_dg_norm = -1.0;

  for (int it = 0; it < max_iter; ++it) {
    // column update: S_l = log density of the pre-proximal marginal (source masses are
    // absorbed into f by the row projection below)
    for (int l = 0; l < n; ++l) {
      tmp = (f - C.col(l)) / eps;
      S[l] = detail::logsumexp(tmp);
    }
    Eigen::VectorXd g_raw = -prox_factor * S;

    // Aitken extrapolation on the g sequence, safeguarded by the residual check below
    Eigen::VectorXd dg = g_raw - g;
    double dgn = dg.lpNorm<1>();
    if (last_dg_norm > 0 && dgn > 0 && dgn < last_dg_norm) {
      double q = dgn / last_dg_norm;
      if (q > 0.5 && q < 0.9999 && it % 4 == 3) {
        g = g + dg * (1.0 / (1.0 - q));
      } else {
        g = g_raw;
      }
    } else {
      g = g_raw;
    }
    last_dg_norm = dgn;

    // row residual with the fresh g, then the exact row projection
    res = 0.0;
    for (int k = 0; k < m; ++k) {
      if (log_a[k] == -inf) {
        f[k] = -inf;
        continue;
      }
      tmp = (g - C.row(k).transpose()) / eps + log_w;
      r[k] = detail::logsumexp(tmp);
      res += std::abs(std::exp(f[k] / eps + r[k]) - p.src_mass[k]);
      f[k] = eps * (log_a[k] - r[k]);
    }
    ++iter_count;
    if (res <= tol) break;
  }
  return res;
}

inline void assemble_plan(const ScalingProblem& p, double eps, const Eigen::VectorXd& f,
                          const Eigen::VectorXd& g, Eigen::MatrixXd& pi) {
  const Eigen::MatrixXd& C = *p.cost;
  const int m = static_cast<int>(p.src_mass.size());
  const int n = static_cast<int>(p.tgt_weight.size());
  pi.resize(m, n);
  for (int k = 0; k < m; ++k) {
    if (!(p.src_mass[k] > 0)) {
      pi.row(k).setZero();
      continue;
    }
    for (int l = 0; l < n; ++l) {
      double e = (f[k] + g[l] - C(k, l)) / eps + std::log(p.tgt_weight[l]);
      pi(k, l) = std::exp(e);
    }
    double rs = pi.row(k).sum();
    if (rs > 0) pi.row(k) *= p.src_mass[k] / rs;  // exact first-marginal projection
  }
}

inline Eigen::VectorXd mollified_interior_weights(const Discretization& d, double eps_mu) {
  if (eps_mu < 2.0 * d.mesh())
    throw std::invalid_argument("mu_regularization below twice the mesh width");
  Eigen::VectorXd w = d.weight.head(d.n_interior);
  for (int j = 0; j < d.n_boundary; ++j) {
    const Eigen::Vector2d bp = d.pos[d.n_interior + j];
    double removed = d.weight[d.n_interior + j];
    // patch: interior cells within eps_mu of this node, same normal fiber
    std::vector<int> patch;
    double patch_vol = 0.0;
    for (int i = 0; i < d.n_interior; ++i) {
      double dist_to_node;
      if (d.is_interval()) {
        dist_to_node = std::abs(d.pos[i].x() - bp.x());
      } else {
        // same angular sector, measured radially
        int nt = d.spec.angular;
        int sector = i % nt;
        if (sector != j) continue;
        dist_to_node = d.spec.extent - d.pos[i].norm();
      }
      if (dist_to_node <= eps_mu) {
        patch.push_back(i);
        patch_vol += d.weight[i];
      }
    }
    for (int i : patch) w[i] += removed * d.weight[i] / patch_vol;
  }
  return w;
}

}  // namespace detail

inline JkoStepResult jko_step_brute_force(const DecomposedMeasure& prev, const JkoConfig& cfg);

inline JkoStepResult jko_step(const DecomposedMeasure& prev, const JkoConfig& cfg,
                              JkoWarmState* warm = nullptr) {
  cfg.validate();
  prev.check_probability();
  if (cfg.solver == JkoSolver::BruteForceOracle) return jko_step_brute_force(prev, cfg);
  const Discretization& d = *prev.disc;
  const int m = d.total();
  const bool regularized = cfg.mu_regularization > 0.0;

  detail::ScalingProblem p;
  p.src_mass = prev.masses();
  if (regularized) {
    p.tgt_weight = detail::mollified_interior_weights(d, cfg.mu_regularization);
    p.cost_sub = d.cost.leftCols(d.n_interior);
    p.cost = &p.cost_sub;
  } else {
    p.tgt_weight = d.weight;
    p.cost = &d.cost;
  }
  const int n = static_cast<int>(p.tgt_weight.size());

  Eigen::VectorXd f = Eigen::VectorXd::Zero(m), g = Eigen::VectorXd::Zero(n);
  bool have_warm = warm && warm->valid && warm->f.size() == m && warm->g.size() == n;
  if (have_warm) {
    f = warm->f;
    g = warm->g;
  }

  JkoStepResult out;
  out.plan.method = PlanMethod::Entropic;
  int iters = 0;
  double res = 0.0;

  double eps_start = have_warm ? std::min(cfg.sinkhorn_epsilon, 4.0 * cfg.epsilon_floor)
                               : cfg.sinkhorn_epsilon;
  std::vector<double> schedule;
  for (double e = eps_start; e > cfg.epsilon_floor * (1.0 + 1e-12); e *= cfg.epsilon_decay)
    schedule.push_back(e);
  schedule.push_back(cfg.epsilon_floor);

  double eps = cfg.epsilon_floor;
  for (double e : schedule) {
    eps = e;
    res = detail::scaling_stage(p, e, cfg.tau, cfg.max_inner_iter, cfg.inner_tol, f, g, iters);
  }

  // continuation: halve epsilon until the output stops moving
  Eigen::MatrixXd pi;
  detail::assemble_plan(p, eps, f, g, pi);
  Eigen::VectorXd out_mass = pi.colwise().sum();
  while (eps * 0.5 >= cfg.epsilon_min) {
    eps *= 0.5;
    res = detail::scaling_stage(p, eps, cfg.tau, cfg.max_inner_iter, cfg.inner_tol, f, g, iters);
    detail::assemble_plan(p, eps, f, g, pi);
    Eigen::VectorXd fresh = pi.colwise().sum();
    double drift = (fresh - out_mass).lpNorm<1>();
    out_mass = fresh;
    if (drift <= cfg.drift_tol) break;
  }

  out.converged = res <= cfg.inner_tol * 10;
  out.marginal_residual = res;
  out.final_epsilon = eps;
  out.iterations = iters;
  out.plan.epsilon = eps;
  out.plan.iterations = iters;
  out.plan.converged = out.converged;

  if (regularized) {
    out.plan.pi = Eigen::MatrixXd::Zero(m, m);
    out.plan.pi.leftCols(d.n_interior) = pi;
    Eigen::VectorXd omega = out_mass.cwiseQuotient(d.weight.head(d.n_interior));
    out.next = DecomposedMeasure(prev.disc, omega, Eigen::VectorXd::Zero(d.n_boundary));
  } else {
    out.plan.pi = pi;
    out.next = DecomposedMeasure::from_masses(prev.disc, out_mass);
  }
  out.plan.cost_value = 0.0;
  for (int k = 0; k < out.plan.pi.rows(); ++k)
    for (int l = 0; l < out.plan.pi.cols(); ++l)
      if (out.plan.pi(k, l) > 0) out.plan.cost_value += out.plan.pi(k, l) * d.cost(k, l);
  out.plan.marginal_residual = res;

  if (warm) {
    warm->f = f;
    // pad g back to full size for reuse only in the same-target setting
    if (!regularized) {
      warm->g = g;
      warm->valid = true;
    } else {
      warm->valid = false;
    }
  }
  return out;
}

// Direct minimization over the plan simplex (rows fixed to prev) by mirror descent with
// backtracking; ground truth for tiny instances.
inline JkoStepResult jko_step_brute_force(const DecomposedMeasure& prev, const JkoConfig& cfg) {
  const Discretization& d = *prev.disc;
  const int m = d.total();
  if (m > 12) throw std::invalid_argument("BruteForceOracle: more than 12 sites");
  prev.check_probability();

  const Eigen::VectorXd a = prev.masses();
  const Eigen::VectorXd& w = d.weight;
  const Eigen::MatrixXd& C = d.cost;
  const double tau = cfg.tau;

  auto objective = [&](const Eigen::MatrixXd& P) {
    Eigen::VectorXd sigma = P.colwise().sum().transpose().cwiseQuotient(w);
    double e = 0.0;
    for (int l = 0; l < m; ++l) e += w[l] * entropy_kernel(sigma[l]);
    return (P.array() * C.array()).sum() / (2 * tau) + e;
  };

  Eigen::MatrixXd P(m, m);
  for (int k = 0; k < m; ++k) P.row(k) = a[k] * (w / w.sum()).transpose();

  double fval = objective(P);
  double eta = tau;
  double kkt = kInf;
  int it = 0;
  const int max_it = 400000;
  Eigen::MatrixXd grad(m, m), trial(m, m);
  for (; it < max_it; ++it) {
    Eigen::VectorXd sigma = P.colwise().sum().transpose().cwiseQuotient(w);
    for (int l = 0; l < m; ++l) {
      double lg = sigma[l] > 0 ? std::log(sigma[l]) : -700.0;
      for (int k = 0; k < m; ++k) grad(k, l) = C(k, l) / (2 * tau) + lg;
    }
    // KKT stationarity per row: mass-weighted excess over the row minimum
    kkt = 0.0;
    for (int k = 0; k < m; ++k) {
      if (a[k] <= 0) continue;
      double mn = kInf;
      for (int l = 0; l < m; ++l)
        if (P(k, l) > 1e-18 * a[k]) mn = std::min(mn, grad(k, l));
      double s = 0.0;
      for (int l = 0; l < m; ++l) s += P(k, l) * std::max(0.0, grad(k, l) - mn);
      kkt = std::max(kkt, s);
      // also: no strictly cheaper unused column
      for (int l = 0; l < m; ++l) kkt = std::max(kkt, std::max(0.0, mn - grad(k, l)) * a[k]);
    }
    if (kkt <= 1e-10 * (1.0 + std::abs(fval))) break;

    while (true) {
      for (int k = 0; k < m; ++k) {
        if (a[k] <= 0) {
          trial.row(k).setZero();
          continue;
        }
        double mx = -kInf;
        for (int l = 0; l < m; ++l) mx = std::max(mx, -eta * grad(k, l));
        double z = 0.0;
        for (int l = 0; l < m; ++l) {
          trial(k, l) = P(k, l) * std::exp(-eta * grad(k, l) - mx);
          z += trial(k, l);
        }
        trial.row(k) *= a[k] / z;
      }
      double ftrial = objective(trial);
      if (ftrial <= fval + 1e-15 || eta < 1e-12) {
        P = trial;
        fval = ftrial;
        eta *= 1.05;
        break;
      }
      eta *= 0.5;
    }
  }

  JkoStepResult out;
  out.plan.method = PlanMethod::ExactLP;  // no entropic smoothing in the oracle
  out.plan.pi = P;
  out.plan.cost_value = (P.array() * C.array()).sum();
  out.plan.marginal_residual = (P.rowwise().sum() - a).lpNorm<1>();
  out.next = DecomposedMeasure::from_masses(prev.disc, P.colwise().sum());
  out.converged = kkt <= 1e-8 * (1.0 + std::abs(fval));
  out.marginal_residual = kkt;
  out.iterations = it;
  return out;
}

struct JkoStepRecord {
  double w2 = 0.0;      // squared Wasserstein between consecutive states
  double speed2 = 0.0;  // w2 / tau^2, metric speed of the geodesic interpolant
  double entropy_after = 0.0;
  double fisher_interior_after = 0.0;
  double fisher_boundary_after = 0.0;
  double trace_gap_after = 0.0;
  double edi_slack = 0.0;  // E(prev) - E(next) - w2/(2 tau), >= -tol by minimality
};

struct JkoTrajectory {
  DiscPtr disc;
  JkoConfig cfg;
  std::vector<DecomposedMeasure> states;
  std::vector<TransportPlan> plans;
  std::vector<JkoStepRecord> records;
  std::vector<double> times;
  bool converged = true;
  int failed_step = -1;
};

inline JkoTrajectory run_trajectory(const DecomposedMeasure& rho0, double T,
                                    const JkoConfig& cfg) {
  cfg.validate();
  if (!(T > 0)) throw std::invalid_argument("run_trajectory: T <= 0");
  if (!std::isfinite(entropy(rho0))) throw std::invalid_argument("run_trajectory: E(rho0) infinite");
  JkoTrajectory traj;
  traj.disc = rho0.disc;
  traj.cfg = cfg;
  const int n_steps = static_cast<int>(std::ceil(T / cfg.tau - 1e-12));
  traj.states.push_back(rho0);
  traj.times.push_back(0.0);
  JkoWarmState warm;
  double e_prev = entropy(rho0);
  for (int n = 0; n < n_steps; ++n) {
    JkoStepResult step = jko_step(traj.states.back(), cfg, &warm);
    if (!step.converged) {
      traj.converged = false;
      if (traj.failed_step < 0) traj.failed_step = n;
    }
    JkoStepRecord rec;
    if (traj.disc->total() <= cfg.w2_exact_limit) {
      TransportPlan exact = wasserstein_exact(traj.states.back(), step.next);
      rec.w2 = exact.cost_value;
    } else {
      rec.w2 = step.plan.cost_value;
    }
    rec.speed2 = rec.w2 / (cfg.tau * cfg.tau);
    rec.entropy_after = entropy(step.next);
    rec.fisher_interior_after = fisher(step.next, Part::Interior);
    rec.fisher_boundary_after = fisher(step.next, Part::Boundary);
    rec.trace_gap_after = trace_gap(step.next);
    rec.edi_slack = e_prev - rec.entropy_after - rec.w2 / (2 * cfg.tau);
    e_prev = rec.entropy_after;
    traj.records.push_back(rec);
    traj.plans.push_back(std::move(step.plan));
    traj.states.push_back(std::move(step.next));
    traj.times.push_back((n + 1) * cfg.tau);
  }
  return traj;
}

enum class InterpKind { Constant, Geodesic, DeGiorgi };

namespace detail {

inline int nearest_site(const Discretization& d, const Eigen::Vector2d& x) {
  int best = 0;
  double bd = kInf;
  for (int i = 0; i < d.total(); ++i) {
    double dist = (d.pos[i] - x).squaredNorm();
    if (dist < bd) {
      bd = dist;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

// Displacement interpolation of a stored plan, deposited to the nearest grid site.
inline DecomposedMeasure displacement_interpolate(const DiscPtr& disc, const TransportPlan& plan,
                                                  double s) {
  const Discretization& d = *disc;
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(d.total());
  const double tiny = 1e-16 * std::max(1.0, plan.pi.sum());
  for (int i = 0; i < plan.pi.rows(); ++i)
    for (int j = 0; j < plan.pi.cols(); ++j) {
      double p = plan.pi(i, j);
      if (p <= tiny) continue;
      if (s <= 0.0) {
        mass[i] += p;
      } else if (s >= 1.0) {
        mass[j] += p;
      } else {
        Eigen::Vector2d z = (1.0 - s) * d.pos[i] + s * d.pos[j];
        mass[detail::nearest_site(d, z)] += p;
      }
    }
  return DecomposedMeasure::from_masses(disc, mass);
}

inline DecomposedMeasure interpolate(const JkoTrajectory& traj, double t, InterpKind kind,
                                     const JkoConfig& cfg) {
  const double tau = traj.cfg.tau;
  const double T = traj.times.back();
  if (t < -1e-12 || t > T + 1e-12) throw std::invalid_argument("interpolate: t outside [0, T]");
  t = std::clamp(t, 0.0, T);
  int n = static_cast<int>(std::floor(t / tau + 1e-12));
  n = std::min(n, static_cast<int>(traj.states.size()) - 1);
  double r = t - n * tau;

  switch (kind) {
    case InterpKind::Constant:
      return r > 1e-14 ? traj.states[n + 1] : traj.states[n];
    case InterpKind::Geodesic: {
      if (r <= 1e-14) return traj.states[n];
      return displacement_interpolate(traj.disc, traj.plans[n], r / tau);
    }
    case InterpKind::DeGiorgi: {
      if (r <= 0.0) return traj.states[n];
      JkoConfig sub = cfg;
      sub.tau = r;
      return jko_step(traj.states[n], sub).next;
    }
  }
  throw std::logic_error("interpolate: unknown kind");
}

}  // namespace sticky

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sticky/measure.hpp"

// Optimal transport over the full site set with squared Euclidean (chord) cost, plus
// the intrinsic-boundary Wasserstein distance on the circle. The exact solver is a
// successive-shortest-path transportation algorithm with node potentials; it is the
// ground truth for everything below the site guard. The entropic solver is the
// scalable stand-in and always reports its bias handles.

namespace sticky {

enum class PlanMethod { ExactLP, Entropic };

struct TransportPlan {
  Eigen::MatrixXd pi;  // rows = source sites, columns = target sites, mass units
  double cost_value = 0.0;
  PlanMethod method = PlanMethod::ExactLP;
  double epsilon = 0.0;        // entropic only
  double cost_debiased = 0.0;  // entropic only: raw minus self-transport costs
  double marginal_residual = 0.0;
  double dual_residual = 0.0;  // exact only: reduced-cost certificate
  bool converged = true;
  int iterations = 0;
};

namespace detail {

constexpr int kSiteGuard = 4096;

// Min-cost transportation by successive shortest augmenting paths (dense Dijkstra with
// Johnson potentials). Exact up to floating-point round-off; terminates after at most
// O(m+n) augmentations since every augmentation exhausts a supply, a demand, or a
// residual arc.
inline TransportPlan solve_transport_ssp(const Eigen::VectorXd& supply,
                                         const Eigen::VectorXd& demand,
                                         const Eigen::MatrixXd& cost) {
  const int m = static_cast<int>(supply.size());
  const int n = static_cast<int>(demand.size());
  const double total = supply.sum();
  const double mass_eps = std::max(1e-15 * std::max(total, 1.0), 1e-300);

  TransportPlan plan;
  plan.method = PlanMethod::ExactLP;
  plan.pi = Eigen::MatrixXd::Zero(m, n);

  Eigen::VectorXd rs = supply, rd = demand;      // remaining supply / demand
  Eigen::VectorXd pot = Eigen::VectorXd::Zero(m + n);  // node potentials
  std::vector<double> dist(m + n);
  std::vector<int> parent(m + n);  // predecessor node, -1 for roots
  std::vector<char> done(m + n);

  const double inf = std::numeric_limits<double>::infinity();
  int guard = 16 * (m + n) + 64;
  while (rs.sum() > mass_eps) {
    if (--guard < 0) throw std::runtime_error("transport: augmentation guard exceeded");
    // multi-source Dijkstra over the residual graph, reduced costs >= 0
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (int i = 0; i < m; ++i)
      if (rs[i] > mass_eps) dist[i] = 0.0;

    int target = -1;
    while (true) {
      int u = -1;
      double best = inf;
      for (int v = 0; v < m + n; ++v)
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      if (u < 0) break;
      done[u] = 1;
      if (u >= m && rd[u - m] > mass_eps) {
        target = u;
        break;
      }
      if (u < m) {
        for (int j = 0; j < n; ++j) {
          double rc = std::max(0.0, cost(u, j) + pot[u] - pot[m + j]);
          if (dist[u] + rc < dist[m + j]) {
            dist[m + j] = dist[u] + rc;
            parent[m + j] = u;
          }
        }
      } else {
        int j = u - m;
        for (int i = 0; i < m; ++i) {
          if (plan.pi(i, j) <= 0.0) continue;
          double rc = std::max(0.0, -cost(i, j) + pot[u] - pot[i]);
          if (dist[u] + rc < dist[i]) {
            dist[i] = dist[u] + rc;
            parent[i] = u;
          }
        }
      }
    }
    if (target < 0) throw std::runtime_error("transport: no augmenting path (mass mismatch?)");

    const double dt = dist[target];
    for (int v = 0; v < m + n; ++v) pot[v] += std::min(dist[v], dt);

    // bottleneck along the path
    double bottleneck = rd[target - m];
    for (int v = target; parent[v] >= 0; v = parent[v]) {
      int p = parent[v];
      if (v >= m)
        ;  // forward arc p->v, uncapacitated
      else
        bottleneck = std::min(bottleneck, plan.pi(v, p - m));
      if (parent[p] < 0) bottleneck = std::min(bottleneck, rs[p]);
    }
    // apply
    for (int v = target; parent[v] >= 0; v = parent[v]) {
      int p = parent[v];
      if (v >= m)
        plan.pi(p, v - m) += bottleneck;
      else
        plan.pi(v, p - m) -= bottleneck;
      if (parent[p] < 0) rs[p] -= bottleneck;
    }
    rd[target - m] -= bottleneck;
    ++plan.iterations;
  }

  plan.cost_value = (plan.pi.array() * cost.array()).sum();
  double row_res = (plan.pi.rowwise().sum() - supply).lpNorm<1>();
  double col_res = (plan.pi.colwise().sum().transpose() - demand).lpNorm<1>();
  plan.marginal_residual = std::max(row_res, col_res);

  // reduced-cost certificate: feasible duals + complementary slackness
  double cert = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double rc = cost(i, j) + pot[i] - pot[m + j];
      cert = std::max(cert, -rc);
      if (plan.pi(i, j) > mass_eps) cert = std::max(cert, std::abs(rc));
    }
  plan.dual_residual = cert;
  return plan;
}

inline double logsumexp(const Eigen::VectorXd& v) {
  double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;  // all -inf
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

}  // namespace detail

inline TransportPlan wasserstein_exact(const Eigen::VectorXd& a_mass,
                                       const Eigen::VectorXd& b_mass,
                                       const Eigen::MatrixXd& cost) {
  if (a_mass.size() > detail::kSiteGuard || b_mass.size() > detail::kSiteGuard)
    throw std::invalid_argument("wasserstein_exact: site guard exceeded");
  if (std::abs(a_mass.sum() - b_mass.sum()) > 1e-9 * std::max(1.0, a_mass.sum()))
    throw std::invalid_argument("wasserstein_exact: total masses differ");
  return detail::solve_transport_ssp(a_mass, b_mass, cost);
}

inline TransportPlan wasserstein_exact(const DecomposedMeasure& a, const DecomposedMeasure& b) {
  if (a.disc.get() != b.disc.get())
    throw std::invalid_argument("wasserstein_exact: measures on different discretizations");
  return wasserstein_exact(a.masses(), b.masses(), a.disc->cost);
}

// Log-domain Sinkhorn with a warm geometric epsilon schedule. cost_value is the raw
// transport cost <C, pi> of the converged plan; cost_debiased subtracts the
// self-transport costs (S(a,a)+S(b,b))/2 at the same epsilon.
inline TransportPlan wasserstein_entropic(const Eigen::VectorXd& a_mass,
                                          const Eigen::VectorXd& b_mass,
                                          const Eigen::MatrixXd& cost, double epsilon,
                                          int max_iter = 5000, double tol = 1e-10,
                                          bool debias = true) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("wasserstein_entropic: epsilon <= 0");
  const int m = static_cast<int>(a_mass.size());
  const int n = static_cast<int>(b_mass.size());
  const double inf = std::numeric_limits<double>::infinity();

  Eigen::VectorXd la(m), lb(n);
  for (int i = 0; i < m; ++i) la[i] = a_mass[i] > 0 ? std::log(a_mass[i]) : -inf;
  for (int j = 0; j < n; ++j) lb[j] = b_mass[j] > 0 ? std::log(b_mass[j]) : -inf;

  Eigen::VectorXd f = Eigen::VectorXd::Zero(m), g = Eigen::VectorXd::Zero(n);
  TransportPlan plan;
  plan.method = PlanMethod::Entropic;
  plan.epsilon = epsilon;

  double eps0 = std::max(epsilon, cost.maxCoeff() * 0.1 + epsilon);
  std::vector<double> schedule;
  for (double e = eps0; e > epsilon * 1.5; e *= 0.5) schedule.push_back(e);
  schedule.push_back(epsilon);

  double residual = inf;
  int iters = 0;
  Eigen::VectorXd tmp;
  for (double eps : schedule) {
    int stage_iter = std::max(20, max_iter / static_cast<int>(schedule.size()));
    for (int it = 0; it < stage_iter; ++it) {
      for (int i = 0; i < m; ++i) {
        if (la[i] == -inf) {
          f[i] = -inf;
          continue;
        }
        tmp = (g - cost.row(i).transpose()) / eps;
        f[i] = eps * (la[i] - detail::logsumexp(tmp));
      }
      for (int j = 0; j < n; ++j) {
        if (lb[j] == -inf) {
          g[j] = -inf;
          continue;
        }
        tmp = (f - cost.col(j)) / eps;
        g[j] = eps * (lb[j] - detail::logsumexp(tmp));
      }
      ++iters;
      // row residual after the column update
      double res = 0.0;
      for (int i = 0; i < m; ++i) {
        if (la[i] == -inf) continue;
        tmp = (g - cost.row(i).transpose()) / eps;
        res += std::abs(std::exp(f[i] / eps + detail::logsumexp(tmp)) - a_mass[i]);
      }
      residual = res;
      if (res <= tol && eps == epsilon) break;
      if (res <= tol * 10 && eps != epsilon) break;
    }
  }

  plan.pi.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double lf = f[i] == -inf || g[j] == -inf
                      ? -inf
                      : (f[i] + g[j] - cost(i, j)) / epsilon;
      plan.pi(i, j) = lf == -inf ? 0.0 : std::exp(lf);
    }
  plan.cost_value = (plan.pi.array() * cost.array()).sum();
  plan.iterations = iters;
  double row_res = (plan.pi.rowwise().sum() - a_mass).lpNorm<1>();
  double col_res = (plan.pi.colwise().sum().transpose() - b_mass).lpNorm<1>();
  plan.marginal_residual = std::max(row_res, col_res);
  plan.converged = residual <= tol * 10;

  if (debias) {
    TransportPlan saa = wasserstein_entropic(a_mass, a_mass, cost, epsilon, max_iter, tol, false);
    TransportPlan sbb = wasserstein_entropic(b_mass, b_mass, cost, epsilon, max_iter, tol, false);
    plan.cost_debiased = plan.cost_value - 0.5 * (saa.cost_value + sbb.cost_value);
  } else {
    plan.cost_debiased = plan.cost_value;
  }
  return plan;
}

inline TransportPlan wasserstein_entropic(const DecomposedMeasure& a, const DecomposedMeasure& b,
                                          double epsilon, int max_iter = 5000,
                                          double tol = 1e-10) {
  if (a.disc.get() != b.disc.get())
    throw std::invalid_argument("wasserstein_entropic: measures on different discretizations");
  return wasserstein_entropic(a.masses(), b.masses(), a.disc->cost, epsilon, max_iter, tol);
}

namespace detail {

// Monotone-coupling cost on the circle for a fixed cumulative offset s. Positions are
// unrolled arc-length coordinates; the b-quantile function is extended periodically,
// Qb(u + k) = Qb(u) + k * circumference.
inline double circle_coupling_cost(const std::vector<double>& xa, const std::vector<double>& ca,
                                   const std::vector<double>& xb, const std::vector<double>& cb,
                                   double circumference, double s) {
  const int na = static_cast<int>(xa.size());
  const int nb = static_cast<int>(xb.size());
  double cost = 0.0;
  double u = 0.0;
  int i = 0;
  // locate the b segment containing u - s
  double t = -s;
  double k = std::floor(t);
  double frac = t - k;
  int j = 0;
  while (j < nb && cb[j] <= frac + 1e-18) ++j;
  if (j == nb) {
    j = 0;
    k += 1.0;
  }
  while (u < 1.0 - 1e-15) {
    double ua = i < na ? ca[i] : 1.0;
    double ub = cb[j] + k + s;  // next b breakpoint in u coordinates
    double next = std::min(1.0, std::min(ua, ub));
    double mass = next - u;
    if (mass > 0) {
      double dx = xa[i] - (xb[j] + k * circumference);
      cost += mass * dx * dx;
      u = next;
    }
    if (next >= ua - 1e-18 && i < na) ++i;
    if (next >= ub - 1e-18) {
      ++j;
      if (j == nb) {
        j = 0;
        k += 1.0;
      }
    }
  }
  return cost;
}

}  // namespace detail

// Squared Wasserstein distance on the boundary circle with intrinsic (arc length) cost:
// one-dimensional search over the rotation offset of the monotone coupling, convex in
// the offset. Undefined on the Interval's disconnected boundary.
inline double wasserstein_boundary_circle(const Discretization& d, const Eigen::VectorXd& ga,
                                          const Eigen::VectorXd& gb) {
  if (d.is_interval())
    throw std::invalid_argument("wasserstein_boundary_circle: undefined on the Interval");
  const int nt = d.n_boundary;
  const double circumference = 2.0 * std::numbers::pi * d.spec.extent;

  std::vector<double> xa, ca, xb, cb;
  double ma = 0, mb = 0;
  for (int j = 0; j < nt; ++j) {
    double wa = ga[j] * d.weight[d.n_interior + j];
    double wb = gb[j] * d.weight[d.n_interior + j];
    ma += wa;
    mb += wb;
  }
  if (std::abs(ma - mb) > 1e-9 * std::max(1.0, ma))
    throw std::invalid_argument("wasserstein_boundary_circle: boundary masses differ");
  if (ma <= 0) return 0.0;
  double acc_a = 0, acc_b = 0;
  for (int j = 0; j < nt; ++j) {
    double arc = d.spec.extent * std::atan2(d.pos[d.n_interior + j].y(),
                                            d.pos[d.n_interior + j].x());
    if (arc < 0) arc += circumference;
    double wa = ga[j] * d.weight[d.n_interior + j] / ma;
    double wb = gb[j] * d.weight[d.n_interior + j] / mb;
    if (wa > 0) {
      acc_a += wa;
      xa.push_back(arc);
      ca.push_back(acc_a);
    }
    if (wb > 0) {
      acc_b += wb;
      xb.push_back(arc);
      cb.push_back(acc_b);
    }
  }
  ca.back() = 1.0;
  cb.back() = 1.0;

  auto eval = [&](double s) {
    return detail::circle_coupling_cost(xa, ca, xb, cb, circumference, s);
  };

  // coarse scan, then golden section on the bracketing interval
  const int K = 256;
  double best_s = 0, best_v = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= K; ++k) {
    double s = -1.0 + 2.0 * k / K;
    double v = eval(s);
    if (v < best_v) {
      best_v = v;
      best_s = s;
    }
  }
  double lo = best_s - 2.0 / K, hi = best_s + 2.0 / K;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = eval(x1), f2 = eval(x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = eval(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = eval(x2);
    }
  }
  return std::min(std::min(f1, f2), best_v) * ma;
}

// Forward-plan barycentric momentum: at each target site y, the plan-average of the
// terminal velocity (y - x)/tau, in mass units. Boundary entries split into tangential
// and outward-normal components.
struct Momentum {
  std::vector<Eigen::Vector2d> interior;
  Eigen::VectorXd boundary_tangential;
  Eigen::VectorXd boundary_normal;
};

inline Momentum barycentric_momentum(const TransportPlan& plan, const Discretization& d,
                                     double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("barycentric_momentum: tau <= 0");
  const int m = d.total();
  if (plan.pi.rows() != m || plan.pi.cols() != m)
    throw std::invalid_argument("barycentric_momentum: plan size does not match grid");
  Momentum out;
  out.interior.assign(d.n_interior, Eigen::Vector2d::Zero());
  out.boundary_tangential = Eigen::VectorXd::Zero(d.n_boundary);
  out.boundary_normal = Eigen::VectorXd::Zero(d.n_boundary);
  for (int j = 0; j < m; ++j) {
    Eigen::Vector2d mj = Eigen::Vector2d::Zero();
    for (int i = 0; i < m; ++i) {
      double p = plan.pi(i, j);
      if (p > 0) mj += p * (d.pos[j] - d.pos[i]);
    }
    mj /= tau;
    if (j < d.n_interior) {
      out.interior[j] = mj;
    } else {
      int b = j - d.n_interior;
      out.boundary_normal[b] = mj.dot(d.normal(b));
      out.boundary_tangential[b] = d.is_interval() ? 0.0 : mj.dot(d.tangent(b));
    }
  }
  return out;
}

}  // namespace sticky

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sticky/jko.hpp"
#include "sticky/pde.hpp"

// Machine-checkable ledgers for the quantitative structure of the flow: discrete EDI,
// heat-flow slope probe, momentum decomposition, long-time decay fits, and the
// displacement-nonconvexity demo. Theorem-backed inequalities carry explicit
// tolerances; exploratory quantities are recorded, never asserted.

namespace sticky {

enum class EdiVariant { OneStep, WithDissipation };

struct EdiLedger {
  double entropy_initial = 0.0;
  double entropy_final = 0.0;
  double action = 0.0;  // sum tau * speed^2 / 2
  double dissipation_integral_sentinel = 0.0;
  double dissipation_integral_unconditional = 0.0;
  double slack_one_step = 0.0;          // E0 - ET - action; >= -tol by minimality
  double slack_with_dissipation = 0.0;  // subtracts the unconditional D-integral; reported only
  double edi_slack = 0.0;               // the variant requested
};

inline EdiLedger edi_ledger(const JkoTrajectory& traj, EdiVariant variant,
                            double trace_tol = -1.0) {
  if (traj.states.empty()) throw std::invalid_argument("edi_ledger: empty trajectory");
  if (trace_tol <= 0) trace_tol = default_trace_tol(*traj.disc);
  const double tau = traj.cfg.tau;
  EdiLedger led;
  led.entropy_initial = entropy(traj.states.front());
  led.entropy_final = entropy(traj.states.back());
  for (size_t n = 0; n < traj.records.size(); ++n) {
    const JkoStepRecord& r = traj.records[n];
    led.action += 0.5 * tau * r.speed2;
    double fsum = r.fisher_interior_after + r.fisher_boundary_after;
    led.dissipation_integral_unconditional += 0.5 * tau * fsum;
    led.dissipation_integral_sentinel +=
        0.5 * tau * (r.trace_gap_after <= trace_tol ? fsum : kInf);
  }
  led.slack_one_step = led.entropy_initial - led.entropy_final - led.action;
  led.slack_with_dissipation = led.slack_one_step - led.dissipation_integral_unconditional;
  led.edi_slack = variant == EdiVariant::OneStep ? led.slack_one_step : led.slack_with_dissipation;
  return led;
}

// --- long-time decay --------------------------------------------------------------------

struct DecayFit {
  bool fitted = false;
  double lambda_fit = 0.0;
  double r2 = 0.0;
  bool monotone = false;
  bool ckp_ok = false;
  bool self_consistent = false;  // fit reproduces the tail within 5%
  std::vector<double> times;
  std::vector<double> rel_entropy;
  std::vector<double> tv;
};

inline DecayFit decay_fit(const std::vector<DecomposedMeasure>& states,
                          const std::vector<double>& times) {
  if (states.size() != times.size() || states.size() < 4)
    throw std::invalid_argument("decay_fit: need >= 4 samples");
  DecayFit fit;
  fit.times = times;
  fit.monotone = true;
  fit.ckp_ok = true;
  for (const DecomposedMeasure& s : states) {
    double h = rel_entropy_stationary(s);
    fit.rel_entropy.push_back(h);
    CkpResult c = ckp_check(s);
    fit.tv.push_back(c.lhs);
    fit.ckp_ok = fit.ckp_ok && c.ok;
  }
  for (size_t k = 0; k + 1 < fit.rel_entropy.size(); ++k)
    if (fit.rel_entropy[k + 1] > fit.rel_entropy[k] + 1e-10 + 1e-9 * fit.rel_entropy[k])
      fit.monotone = false;

  // two decades of decay required before fitting
  double h0 = fit.rel_entropy.front(), hT = fit.rel_entropy.back();
  if (!(h0 > 0) || hT > 1e-2 * h0) return fit;

  // tail window: last half of the samples with H above the round-off floor
  std::vector<size_t> idx;
  for (size_t k = 0; k < fit.rel_entropy.size(); ++k)
    if (fit.rel_entropy[k] > 1e-12) idx.push_back(k);
  if (idx.size() < 4) return fit;
  idx.erase(idx.begin(), idx.begin() + idx.size() / 2);

  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t k : idx) {
    double x = times[k], y = std::log(fit.rel_entropy[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  double nn = static_cast<double>(idx.size());
  double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
  double ss_tot = syy - sy * sy / nn;
  double intercept = (sy - slope * sx) / nn;
  double ss_res = 0;
  for (size_t k : idx) {
    double e = std::log(fit.rel_entropy[k]) - (intercept + slope * times[k]);
    ss_res += e * e;
  }
  fit.lambda_fit = -0.5 * slope;
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.fitted = fit.lambda_fit > 0;

  size_t tail0 = idx.front();
  fit.self_consistent = true;
  for (size_t k : idx) {
    double bound = fit.rel_entropy[tail0] *
                   std::exp(-2.0 * fit.lambda_fit * (times[k] - times[tail0])) * 1.05;
    if (fit.rel_entropy[k] > bound) fit.self_consistent = false;
  }
  return fit;
}

// --- heat-flow slope probe ---------------------------------------------------------------

struct SlopeProbeRow {
  double t = 0.0;
  double quotient = 0.0;     // (1/t)[E(rho) - E(rho_t) - W^2(rho, rho_t)/(2t)]
  double half_fisher = 0.0;  // (I(omega) + I(gamma))/2
};

// Runs the part-wise heat flows (interior Neumann, boundary ring) from a strictly
// positive state and evaluates the slope quotient by exact OT; the quotient at small t
// bounds half the Fisher information from below.
inline std::vector<SlopeProbeRow> slope_probe(const DecomposedMeasure& rho,
                                              const std::vector<double>& t_list,
                                              int substeps = 64) {
  const Discretization& d = *rho.disc;
  if (rho.omega.minCoeff() <= 0 || (d.n_boundary > 0 && rho.gamma.minCoeff() <= 0))
    throw std::invalid_argument("slope_probe: state must be strictly positive");
  const double half_fisher =
      0.5 * (fisher(rho, Part::Interior) + fisher(rho, Part::Boundary));
  const double e0 = entropy(rho);

  std::vector<SlopeProbeRow> rows;
  for (double t : t_list) {
    FdSystem flow_int = build_fd_system(rho.disc, t / substeps, FdParts::InteriorNeumann);
    Eigen::VectorXd dens = rho.densities();
    for (int s = 0; s < substeps; ++s) dens = flow_int.step(dens);
    Eigen::VectorXd omega_t = dens.head(d.n_interior);
    Eigen::VectorXd gamma_t = rho.gamma;
    if (!d.is_interval()) {
      FdSystem flow_bnd = build_fd_system(rho.disc, t / substeps, FdParts::BoundaryOnly);
      Eigen::VectorXd db = rho.densities();
      for (int s = 0; s < substeps; ++s) db = flow_bnd.step(db);
      gamma_t = db.tail(d.n_boundary);
    }
    DecomposedMeasure rho_t(rho.disc, omega_t, gamma_t);

    // product-plan cost: exact OT of the interior parts plus intrinsic OT on the circle
    Eigen::VectorXd wa = rho.omega.cwiseProduct(d.weight.head(d.n_interior));
    Eigen::VectorXd wb = omega_t.cwiseProduct(d.weight.head(d.n_interior));
    double w2 = wasserstein_exact(wa, wb, d.cost.topLeftCorner(d.n_interior, d.n_interior))
                    .cost_value;
    if (!d.is_interval()) w2 += wasserstein_boundary_circle(d, rho.gamma, gamma_t);

    SlopeProbeRow row;
    row.t = t;
    row.half_fisher = half_fisher;
    row.quotient = (e0 - entropy(rho_t) - w2 / (2 * t)) / t;
    rows.push_back(row);
  }
  return rows;
}

// --- momentum decomposition ----------------------------------------------------------------

struct MomentumRow {
  int step = -1;
  double interior_residual_rel = 0.0;    // |m + grad omega * vol|_1 / |grad omega * vol|_1
  double tangential_residual_rel = 0.0;  // Disk only
  double normal_l1 = 0.0;                // |n_Gamma|_1, expected to vanish as tau -> 0
  double fisher_sum = 0.0;               // I(omega)+I(gamma) at the step output
  double speed2 = 0.0;                   // W^2/tau^2
  bool energy_ok = false;                // fisher_sum <= speed2 * (1+tol)
};

inline std::vector<MomentumRow> momentum_decomposition_report(const JkoTrajectory& traj,
                                                              double energy_tol = 0.05) {
  const Discretization& d = *traj.disc;
  std::vector<MomentumRow> rows;
  for (size_t n = 0; n < traj.plans.size(); ++n) {
    const DecomposedMeasure& next = traj.states[n + 1];
    Momentum mom = barycentric_momentum(traj.plans[n], d, traj.cfg.tau);
    std::vector<Eigen::Vector2d> go = cell_gradient(d, next.omega, next.gamma);

    MomentumRow row;
    row.step = static_cast<int>(n);
    double num = 0, den = 0;
    for (int i = 0; i < d.n_interior; ++i) {
      num += (mom.interior[i] + go[i] * d.weight[i]).norm();
      den += (go[i] * d.weight[i]).norm();
    }
    row.interior_residual_rel = num / std::max(den, 1e-300);
    if (!d.is_interval()) {
      Eigen::VectorXd gg = boundary_gradient(d, next.gamma);
      double tn = 0, td = 0;
      for (int j = 0; j < d.n_boundary; ++j) {
        double area = d.weight[d.n_interior + j];
        tn += std::abs(mom.boundary_tangential[j] + gg[j] * area);
        td += std::abs(gg[j] * area);
      }
      row.tangential_residual_rel = tn / std::max(td, 1e-300);
    }
    row.normal_l1 = mom.boundary_normal.lpNorm<1>();
    row.fisher_sum = traj.records[n].fisher_interior_after + traj.records[n].fisher_boundary_after;
    row.speed2 = traj.records[n].speed2;
    row.energy_ok = row.fisher_sum <= row.speed2 * (1.0 + energy_tol) + 1e-12;
    rows.push_back(row);
  }
  return rows;
}

// --- displacement nonconvexity ---------------------------------------------------------------

struct NonconvexityReport {
  double interior_mass_fraction = 0.0;
  double entropy_endpoint_a = 0.0;
  double entropy_endpoint_b = 0.0;
  double entropy_midpoint = 0.0;
};

// Two boundary caps of angular half-width pi/8 with a raised-cosine profile, mass 1 each.
inline DecomposedMeasure boundary_cap(const DiscPtr& disc, double center_angle,
                                      double half_width = std::numbers::pi / 8) {
  const Discretization& d = *disc;
  if (d.is_interval()) throw std::invalid_argument("boundary_cap: Disk only");
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(d.n_boundary);
  for (int j = 0; j < d.n_boundary; ++j) {
    double th = std::atan2(d.pos[d.n_interior + j].y(), d.pos[d.n_interior + j].x());
    double delta = std::remainder(th - center_angle, 2 * std::numbers::pi);
    if (std::abs(delta) < half_width) {
      double c = std::cos(delta * std::numbers::pi / (2 * half_width));
      gamma[j] = c * c;
    }
  }
  double mass = gamma.dot(d.weight.tail(d.n_boundary));
  if (mass <= 0) throw std::runtime_error("boundary_cap: empty cap (grid too coarse)");
  gamma /= mass;
  return DecomposedMeasure(disc, Eigen::VectorXd::Zero(d.n_interior), gamma);
}

inline NonconvexityReport nonconvexity_demo(const DiscPtr& disc) {
  DecomposedMeasure a = boundary_cap(disc, 0.0);
  DecomposedMeasure b = boundary_cap(disc, std::numbers::pi);
  TransportPlan plan = wasserstein_exact(a, b);
  DecomposedMeasure mid = displacement_interpolate(disc, plan, 0.5);
  NonconvexityReport rep;
  rep.interior_mass_fraction = mid.interior_mass();
  rep.entropy_endpoint_a = entropy(a);
  rep.entropy_endpoint_b = entropy(b);
  rep.entropy_midpoint = entropy(mid);
  return rep;
}

}  // namespace sticky

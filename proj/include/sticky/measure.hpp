#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "sticky/domain.hpp"

// Decomposed measures rho = omega + gamma and the functionals driving the flow:
// entropy E, Fisher informations I(omega), I(gamma), the trace-gated dissipation D,
// and distances to the renormalized stationary measure.

namespace sticky {

using DiscPtr = std::shared_ptr<const Discretization>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// H(z) = z log z - z + 1, with the limit values H(0) = 1 and 0 log 0 = 0.
inline double entropy_kernel(double z) {
  if (z <= 0.0) return 1.0;
  return z * std::log(z) - z + 1.0;
}
inline double xlogx(double z) { return z > 0.0 ? z * std::log(z) : 0.0; }

struct DecomposedMeasure {
  DiscPtr disc;
  Eigen::VectorXd omega;  // interior density w.r.t. mu (per cell)
  Eigen::VectorXd gamma;  // boundary density w.r.t. mu (per node)

  DecomposedMeasure() = default;
  DecomposedMeasure(DiscPtr d, Eigen::VectorXd o, Eigen::VectorXd g)
      : disc(std::move(d)), omega(std::move(o)), gamma(std::move(g)) {
    if (omega.size() != disc->n_interior || gamma.size() != disc->n_boundary)
      throw std::invalid_argument("DecomposedMeasure: density sizes do not match grid");
  }

  Eigen::VectorXd densities() const {
    Eigen::VectorXd all(disc->total());
    all << omega, gamma;
    return all;
  }
  Eigen::VectorXd masses() const { return densities().cwiseProduct(disc->weight); }
  double mass() const { return masses().sum(); }
  double interior_mass() const { return omega.dot(disc->weight.head(disc->n_interior)); }
  double boundary_mass() const { return gamma.dot(disc->weight.tail(disc->n_boundary)); }

  bool nonnegative(double tol = 0.0) const {
    return omega.minCoeff() >= -tol && (gamma.size() == 0 || gamma.minCoeff() >= -tol);
  }
  void check_probability(double tol = 1e-9) const {
    if (!nonnegative()) throw std::invalid_argument("measure has negative densities");
    if (std::abs(mass() - 1.0) > tol) throw std::invalid_argument("measure mass != 1");
  }

  static DecomposedMeasure from_masses(DiscPtr d, const Eigen::VectorXd& m) {
    Eigen::VectorXd dens = m.cwiseQuotient(d->weight);
    return DecomposedMeasure(d, dens.head(d->n_interior), dens.tail(d->n_boundary));
  }
};

// Renormalized stationary measure mu/mu(closure) as a probability.
inline DecomposedMeasure stationary_measure(const DiscPtr& d) {
  double z = d->mu_mass();
  return DecomposedMeasure(d, Eigen::VectorXd::Constant(d->n_interior, 1.0 / z),
                           Eigen::VectorXd::Constant(d->n_boundary, 1.0 / z));
}

inline double entropy(const DecomposedMeasure& rho) {
  const Discretization& d = *rho.disc;
  double e = 0.0;
  for (int i = 0; i < d.n_interior; ++i) e += d.weight[i] * entropy_kernel(rho.omega[i]);
  for (int j = 0; j < d.n_boundary; ++j)
    e += d.weight[d.n_interior + j] * entropy_kernel(rho.gamma[j]);
  return e;
}

enum class Part { Interior, Boundary };

// Fisher information 4 * sum over faces of |D sqrt(f)|^2 with mu-weights. The sqrt form
// stays finite at vacuum; it agrees with int |grad f|^2 / f for positive densities.
inline double fisher(const DecomposedMeasure& rho, Part part) {
  const Discretization& d = *rho.disc;
  double s = 0.0;
  if (part == Part::Interior) {
    for (const Face& f : d.interior_faces) {
      double du = (std::sqrt(rho.omega[f.b]) - std::sqrt(rho.omega[f.a])) / f.dist;
      s += du * du * f.area * f.dist;
    }
  } else {
    for (const Face& f : d.ring_faces) {
      double du = (std::sqrt(rho.gamma[f.b - d.n_interior]) -
                   std::sqrt(rho.gamma[f.a - d.n_interior])) /
                  f.dist;
      s += du * du * f.area * f.dist;
    }
  }
  return 4.0 * s;
}

// L1 mismatch between the extracted interior trace and the boundary density.
inline double trace_gap(const DecomposedMeasure& rho) {
  const Discretization& d = *rho.disc;
  double g = 0.0;
  for (int j = 0; j < d.n_boundary; ++j)
    g += d.weight[d.n_interior + j] * std::abs(d.trace_value(rho.omega, j) - rho.gamma[j]);
  return g;
}

inline double default_trace_tol(const Discretization& d) { return 2.0 * d.mesh(); }

// D(rho) = I(omega) + I(gamma) when the trace matches gamma, +inf otherwise. The
// Dirichlet coupling lives here, not in the entropy.
inline double dissipation(const DecomposedMeasure& rho, double trace_tol) {
  if (!(trace_tol > 0.0)) throw std::invalid_argument("dissipation: trace_tol must be positive");
  if (trace_gap(rho) > trace_tol) return kInf;
  return fisher(rho, Part::Interior) + fisher(rho, Part::Boundary);
}

inline double tv_distance(const DecomposedMeasure& a, const DecomposedMeasure& b) {
  if (a.disc.get() != b.disc.get())
    throw std::invalid_argument("tv_distance: measures on different discretizations");
  return 0.5 * (a.masses() - b.masses()).lpNorm<1>();
}

inline double l1_distance(const DecomposedMeasure& a, const DecomposedMeasure& b) {
  return (a.masses() - b.masses()).lpNorm<1>();
}

// H(rho | mu_bar) for probability rho; equals sum w*d*log(d) + log mu(closure).
inline double rel_entropy_stationary(const DecomposedMeasure& rho) {
  const Discretization& d = *rho.disc;
  Eigen::VectorXd dens = rho.densities();
  double s = 0.0;
  for (int k = 0; k < d.total(); ++k) s += d.weight[k] * xlogx(dens[k]);
  return s + std::log(d.mu_mass());
}

// Vertical shift between E and H(.|mu_bar) on probabilities: E = H + C_mu with
// C_mu = mu(closure) - 1 - log mu(closure).
inline double entropy_shift_constant(const Discretization& d) {
  double z = d.mu_mass();
  return z - 1.0 - std::log(z);
}

inline double tv_to_stationary(const DecomposedMeasure& rho) {
  return tv_distance(rho, stationary_measure(rho.disc));
}

struct CkpResult {
  double lhs = 0.0;  // |rho - mu_bar|_TV
  double rhs = 0.0;  // sqrt(H(rho|mu_bar)/2)
  bool ok = false;
};

inline CkpResult ckp_check(const DecomposedMeasure& rho) {
  CkpResult r;
  r.lhs = tv_to_stationary(rho);
  r.rhs = std::sqrt(0.5 * std::max(0.0, rel_entropy_stationary(rho)));
  r.ok = r.lhs <= r.rhs + 1e-12;
  return r;
}

struct FunctionalReport {
  double entropy = 0.0;
  double fisher_interior = 0.0;
  double fisher_boundary = 0.0;
  double trace_gap = 0.0;
  double dissipation = 0.0;  // +inf sentinel when the trace gate fails
  double fisher_sum = 0.0;   // unconditional I(omega) + I(gamma)
  double rel_entropy_stationary = 0.0;
  double tv_to_stationary = 0.0;
};

inline FunctionalReport functional_report(const DecomposedMeasure& rho, double trace_tol) {
  FunctionalReport r;
  r.entropy = entropy(rho);
  r.fisher_interior = fisher(rho, Part::Interior);
  r.fisher_boundary = fisher(rho, Part::Boundary);
  r.trace_gap = trace_gap(rho);
  r.fisher_sum = r.fisher_interior + r.fisher_boundary;
  r.dissipation = r.trace_gap <= trace_tol ? r.fisher_sum : kInf;
  r.rel_entropy_stationary = rel_entropy_stationary(rho);
  r.tv_to_stationary = tv_to_stationary(rho);
  return r;
}

}  // namespace sticky

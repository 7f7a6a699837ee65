#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sticky/measure.hpp"

// Independent finite-difference solver for the coupled system
//   dt omega = Lap omega   in Omega,   omega = gamma on the boundary,
//   dt gamma = Lap_Gamma gamma - dnu omega   on Gamma,
// by implicit Euler on the same grid. The generator is assembled in flux form: the
// Dirichlet coupling is eliminated by substituting gamma into the near-boundary flux,
// and the boundary equation receives the identical flux with opposite sign, so total
// mass is conserved to round-off at every step. All off-diagonal entries of the
// implicit matrix are nonpositive (M-matrix), which preserves positivity and pointwise
// bounds.

namespace sticky {

enum class FdParts { Coupled, InteriorNeumann, BoundaryOnly };

struct FdSystem {
  DiscPtr disc;
  double dt = 0.0;
  FdParts parts = FdParts::Coupled;
  Eigen::SparseMatrix<double> laplacian;  // mass-form PSD graph Laplacian over all sites
  Eigen::VectorXd conservation;           // mu-weights: left null vector of the generator
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> factor;

  // Generator action on densities: G f = -W^{-1} L f; zero on constants.
  Eigen::VectorXd generator_apply(const Eigen::VectorXd& dens) const {
    return -(laplacian * dens).cwiseQuotient(disc->weight);
  }

  // One implicit Euler step on densities: (W + dt L) f_new = W f_old.
  Eigen::VectorXd step(const Eigen::VectorXd& dens) const {
    Eigen::VectorXd rhs = dens.cwiseProduct(disc->weight);
    Eigen::VectorXd out = factor->solve(rhs);
    if (factor->info() != Eigen::Success) throw std::runtime_error("FdSystem: solve failed");
    return out;
  }

  // Symmetrized generator W^{1/2} G W^{-1/2} for spectral checks.
  Eigen::MatrixXd symmetrized_generator() const {
    Eigen::VectorXd s = disc->weight.cwiseSqrt();
    Eigen::MatrixXd L = Eigen::MatrixXd(laplacian);
    return -(s.cwiseInverse().asDiagonal() * L * s.cwiseInverse().asDiagonal());
  }
};

inline FdSystem build_fd_system(const DiscPtr& disc, double dt,
                                FdParts parts = FdParts::Coupled) {
  if (!(dt > 0)) throw std::invalid_argument("build_fd_system: dt <= 0");
  const Discretization& d = *disc;
  const int m = d.total();
  std::vector<Eigen::Triplet<double>> trip;
  auto add_face = [&trip](int a, int b, double c) {
    trip.emplace_back(a, a, c);
    trip.emplace_back(b, b, c);
    trip.emplace_back(a, b, -c);
    trip.emplace_back(b, a, -c);
  };

  const bool interior = parts != FdParts::BoundaryOnly;
  const bool boundary = parts != FdParts::InteriorNeumann;
  const bool coupling = parts == FdParts::Coupled;

  if (interior) {
    for (const Face& f : d.interior_faces) add_face(f.a, f.b, f.conductance());
    if (!d.is_interval() && d.center_conductance > 0) {
      // innermost ring couples through the theta-averaged center value
      const int nt = d.spec.angular;
      const double c = d.center_conductance;
      for (int j = 0; j < nt; ++j)
        for (int k = 0; k < nt; ++k) {
          double v = c * ((j == k ? 1.0 : 0.0) - 1.0 / nt);
          if (v != 0.0) trip.emplace_back(j, k, v);
        }
    }
  }
  if (coupling)
    for (const Face& f : d.boundary_faces) add_face(f.a, f.b, f.conductance());
  if (boundary)
    for (const Face& f : d.ring_faces) add_face(f.a, f.b, f.conductance());

  FdSystem sys;
  sys.disc = disc;
  sys.dt = dt;
  sys.parts = parts;
  sys.laplacian.resize(m, m);
  sys.laplacian.setFromTriplets(trip.begin(), trip.end());
  sys.conservation = d.weight;

  Eigen::SparseMatrix<double> A = sys.laplacian * dt;
  for (int k = 0; k < m; ++k) A.coeffRef(k, k) += d.weight[k];
  sys.factor = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
  sys.factor->compute(A);
  if (sys.factor->info() != Eigen::Success)
    throw std::runtime_error("build_fd_system: factorization failed");
  return sys;
}

struct FdRun {
  std::vector<DecomposedMeasure> states;
  std::vector<double> times;
};

inline FdRun fd_run(const FdSystem& sys, const DecomposedMeasure& rho0, double T,
                    int store_stride = 1) {
  if (rho0.disc.get() != sys.disc.get())
    throw std::invalid_argument("fd_run: measure on a different discretization");
  if (!rho0.nonnegative()) throw std::invalid_argument("fd_run: negative initial densities");
  const int n_steps = static_cast<int>(std::ceil(T / sys.dt - 1e-12));
  FdRun run;
  run.states.push_back(rho0);
  run.times.push_back(0.0);
  Eigen::VectorXd dens = rho0.densities();
  for (int n = 1; n <= n_steps; ++n) {
    dens = sys.step(dens);
    if (n % store_stride == 0 || n == n_steps) {
      run.states.emplace_back(sys.disc, dens.head(sys.disc->n_interior),
                              dens.tail(sys.disc->n_boundary));
      run.times.push_back(n * sys.dt);
    }
  }
  return run;
}

// --- weak-solution residual ------------------------------------------------------------

struct TestFunction {
  std::string name;
  Eigen::VectorXd values;  // at all sites
};

inline std::vector<TestFunction> weak_test_family(const Discretization& d) {
  std::vector<TestFunction> fam;
  const int m = d.total();
  auto make = [&](const std::string& name, auto&& fn) {
    TestFunction tf;
    tf.name = name;
    tf.values.resize(m);
    for (int i = 0; i < m; ++i) tf.values[i] = fn(d.pos[i]);
    fam.push_back(std::move(tf));
  };
  if (d.is_interval()) {
    make("1", [](const Eigen::Vector2d&) { return 1.0; });
    make("x", [](const Eigen::Vector2d& p) { return p.x(); });
    make("x^2", [](const Eigen::Vector2d& p) { return p.x() * p.x(); });
    const double L = d.spec.extent;
    make("cos(pi x/L)", [L](const Eigen::Vector2d& p) {
      return std::cos(std::numbers::pi * p.x() / L);
    });
  } else {
    make("1", [](const Eigen::Vector2d&) { return 1.0; });
    const double R = d.spec.extent;
    make("x/R", [R](const Eigen::Vector2d& p) { return p.x() / R; });
    make("r^2 cos(theta)", [](const Eigen::Vector2d& p) { return p.norm() * p.x(); });
  }
  return fam;
}

// Dirichlet pairing sum_faces c_f * Dphi * Drho matching the generator's flux form: the
// near-boundary face difference uses the boundary density (the eliminated Dirichlet
// value), and ring faces carry the tangential term.
inline double dirichlet_pairing(const Discretization& d, const Eigen::VectorXd& phi,
                                const Eigen::VectorXd& dens) {
  double s = 0.0;
  for (const Face& f : d.interior_faces)
    s += f.conductance() * (phi[f.b] - phi[f.a]) * (dens[f.b] - dens[f.a]);
  for (const Face& f : d.boundary_faces)
    s += f.conductance() * (phi[f.b] - phi[f.a]) * (dens[f.b] - dens[f.a]);
  for (const Face& f : d.ring_faces)
    s += f.conductance() * (phi[f.b] - phi[f.a]) * (dens[f.b] - dens[f.a]);
  if (!d.is_interval() && d.center_conductance > 0) {
    const int nt = d.spec.angular;
    double phim = 0.0, densm = 0.0;
    for (int j = 0; j < nt; ++j) {
      phim += phi[j];
      densm += dens[j];
    }
    phim /= nt;
    densm /= nt;
    for (int j = 0; j < nt; ++j)
      s += d.center_conductance * (phim - phi[j]) * (densm - dens[j]);
  }
  return s;
}

struct WeakResidualRow {
  std::string name;
  double residual = 0.0;
};

struct WeakResidualTable {
  std::vector<WeakResidualRow> rows;
  double max_abs = 0.0;
};

// R(phi) = <phi, rho_T> - <phi, rho_0> + int (grad phi, grad omega) + (grad_G phi,
// grad_G gamma) dt with trapezoid time quadrature over the stored states.
inline WeakResidualTable weak_residual(const std::vector<DecomposedMeasure>& states,
                                       const std::vector<double>& times) {
  if (states.size() < 2 || states.size() != times.size())
    throw std::invalid_argument("weak_residual: need matching states/times");
  const Discretization& d = *states.front().disc;
  WeakResidualTable table;
  for (const TestFunction& tf : weak_test_family(d)) {
    std::vector<double> pairing(states.size());
    for (size_t k = 0; k < states.size(); ++k)
      pairing[k] = dirichlet_pairing(d, tf.values, states[k].densities());
    double integral = 0.0;
    for (size_t k = 0; k + 1 < states.size(); ++k)
      integral += 0.5 * (pairing[k] + pairing[k + 1]) * (times[k + 1] - times[k]);
    double moved = tf.values.dot(states.back().masses()) - tf.values.dot(states.front().masses());
    double r = moved + integral;
    table.rows.push_back({tf.name, r});
    table.max_abs = std::max(table.max_abs, std::abs(r));
  }
  return table;
}

}  // namespace sticky

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

// Discrete geometry for the bulk/boundary reference measure mu = Leb(Omega) + Leb(Gamma).
// Two domains are supported: the unit-style interval [0,L] (boundary = two points with
// unit weight) and the disk of radius R on a polar cell-centered grid (boundary = circle).
// Sites are indexed interior-first, then boundary nodes.

namespace sticky {

enum class DomainKind { Interval, Disk };

struct DomainSpec {
  DomainKind kind = DomainKind::Interval;
  double extent = 1.0;  // length L (Interval) or radius R (Disk)
  int cells = 64;       // N interior cells (Interval) or N_r radial rings (Disk)
  int angular = 0;      // N_theta angular cells (Disk only)

  void validate() const {
    if (!(extent > 0.0)) throw std::invalid_argument("DomainSpec: extent must be positive");
    if (kind == DomainKind::Interval) {
      if (cells < 2) throw std::invalid_argument("DomainSpec: interval needs >= 2 cells");
    } else {
      if (cells < 2) throw std::invalid_argument("DomainSpec: disk needs N_r >= 2");
      if (angular < 8) throw std::invalid_argument("DomainSpec: disk needs N_theta >= 8");
    }
  }
};

// One face of the mesh: a pair of sites with a transversal measure (`area`) and the
// distance between the site positions. Conductance of the face is area/dist; the
// mu-weight of the face as an integration element is area*dist.
struct Face {
  int a = -1;
  int b = -1;
  double dist = 0.0;
  double area = 0.0;
  double conductance() const { return area / dist; }
};

// Per-node extraction of the interior trace: value = w0*field[c0] + w1*field[c1].
// Linear radial extrapolation by default (second order); w1 = 0 degrades to the
// adjacent-cell value.
struct TraceStencil {
  int c0 = -1, c1 = -1;
  double w0 = 1.0, w1 = 0.0;
};

enum class TraceMode { Adjacent, LinearExtrapolation };

struct Discretization {
  DomainSpec spec;
  int n_interior = 0;
  int n_boundary = 0;

  // Site data, interior cells first then boundary nodes.
  std::vector<Eigen::Vector2d> pos;
  Eigen::VectorXd weight;  // cell volumes, then boundary surface weights

  std::vector<Face> interior_faces;  // cell-cell
  std::vector<Face> boundary_faces;  // cell-node, oriented cell -> node (outward)
  std::vector<Face> ring_faces;      // node-node along the boundary (empty on Interval)

  // Disk only: the innermost ring exchanges mass through the theta-averaged value at
  // the center; per-cell conductance of that virtual face.
  double center_conductance = 0.0;

  std::vector<TraceStencil> trace;

  Eigen::MatrixXd cost;           // squared Euclidean distance over all sites
  Eigen::MatrixXd dist_boundary;  // intrinsic boundary distance; +inf across components

  int total() const { return n_interior + n_boundary; }
  bool is_interval() const { return spec.kind == DomainKind::Interval; }

  // Characteristic spacing normal to the boundary (h or dr); sets trace tolerances.
  double mesh() const {
    return is_interval() ? spec.extent / spec.cells : spec.extent / spec.cells;
  }
  double diameter() const { return is_interval() ? spec.extent : 2.0 * spec.extent; }
  double interior_volume() const { return weight.head(n_interior).sum(); }
  double boundary_area() const { return weight.tail(n_boundary).sum(); }
  double mu_mass() const { return weight.sum(); }

  // Outward unit normal at boundary node j.
  Eigen::Vector2d normal(int j) const {
    if (is_interval()) return j == 0 ? Eigen::Vector2d(-1, 0) : Eigen::Vector2d(1, 0);
    Eigen::Vector2d p = pos[n_interior + j];
    return p / p.norm();
  }
  // Unit tangent at boundary node j (Disk; zero vector on Interval).
  Eigen::Vector2d tangent(int j) const {
    if (is_interval()) return Eigen::Vector2d::Zero();
    Eigen::Vector2d n = normal(j);
    return Eigen::Vector2d(-n.y(), n.x());
  }

  // Trace of an interior field at boundary node j.
  double trace_value(const Eigen::VectorXd& interior_field, int j) const {
    const TraceStencil& s = trace[j];
    double v = s.w0 * interior_field[s.c0];
    if (s.c1 >= 0) v += s.w1 * interior_field[s.c1];
    return v;
  }
  Eigen::VectorXd trace_values(const Eigen::VectorXd& interior_field) const {
    Eigen::VectorXd out(n_boundary);
    for (int j = 0; j < n_boundary; ++j) out[j] = trace_value(interior_field, j);
    return out;
  }

  // One-sided outward normal derivative of an interior field at each boundary node,
  // from the two cells nearest the node.
  Eigen::VectorXd normal_derivative(const Eigen::VectorXd& interior_field) const {
    Eigen::VectorXd out(n_boundary);
    for (int j = 0; j < n_boundary; ++j) {
      const TraceStencil& s = trace[j];
      if (s.c1 < 0) {  // single-cell fallback: derivative unavailable, use face pair
        out[j] = 0.0;
        continue;
      }
      double step = (pos[s.c0] - pos[s.c1]).norm();
      out[j] = (interior_field[s.c0] - interior_field[s.c1]) / step;
    }
    return out;
  }
};

namespace detail {

inline void build_interval(const DomainSpec& spec, Discretization& d) {
  const int n = spec.cells;
  const double L = spec.extent;
  const double h = L / n;
  d.n_interior = n;
  d.n_boundary = 2;
  d.pos.resize(n + 2);
  d.weight.resize(n + 2);
  for (int i = 0; i < n; ++i) {
    d.pos[i] = Eigen::Vector2d((i + 0.5) * h, 0.0);
    d.weight[i] = h;
  }
  d.pos[n] = Eigen::Vector2d(0.0, 0.0);
  d.pos[n + 1] = Eigen::Vector2d(L, 0.0);
  d.weight[n] = d.weight[n + 1] = 1.0;

  for (int i = 0; i + 1 < n; ++i) d.interior_faces.push_back({i, i + 1, h, 1.0});
  d.boundary_faces.push_back({0, n, h / 2, 1.0});
  d.boundary_faces.push_back({n - 1, n + 1, h / 2, 1.0});

  d.dist_boundary.setConstant(2, 2, std::numeric_limits<double>::infinity());
  d.dist_boundary(0, 0) = d.dist_boundary(1, 1) = 0.0;
}

inline void build_disk(const DomainSpec& spec, Discretization& d) {
  const int nr = spec.cells, nt = spec.angular;
  const double R = spec.extent;
  const double dr = R / nr;
  const double dth = 2.0 * std::numbers::pi / nt;
  d.n_interior = nr * nt;
  d.n_boundary = nt;
  d.pos.resize(d.total());
  d.weight.resize(d.total());

  auto cell = [nt](int i, int j) { return i * nt + j; };
  for (int i = 0; i < nr; ++i) {
    double r0 = i * dr, r1 = (i + 1) * dr;
    double rc = 0.5 * (r0 + r1);
    double vol = 0.5 * dth * (r1 * r1 - r0 * r0);
    for (int j = 0; j < nt; ++j) {
      double th = (j + 0.5) * dth;
      d.pos[cell(i, j)] = Eigen::Vector2d(rc * std::cos(th), rc * std::sin(th));
      d.weight[cell(i, j)] = vol;
    }
  }
  for (int j = 0; j < nt; ++j) {
    double th = (j + 0.5) * dth;
    d.pos[d.n_interior + j] = Eigen::Vector2d(R * std::cos(th), R * std::sin(th));
    d.weight[d.n_interior + j] = R * dth;
  }

  for (int i = 0; i + 1 < nr; ++i) {
    double rf = (i + 1) * dr;  // shared radial face
    for (int j = 0; j < nt; ++j)
      d.interior_faces.push_back({cell(i, j), cell(i + 1, j), dr, rf * dth});
  }
  for (int i = 0; i < nr; ++i) {
    double rc = (i + 0.5) * dr;
    for (int j = 0; j < nt; ++j)
      d.interior_faces.push_back({cell(i, j), cell(i, (j + 1) % nt), rc * dth, dr});
  }
  for (int j = 0; j < nt; ++j)
    d.boundary_faces.push_back({cell(nr - 1, j), d.n_interior + j, dr / 2, R * dth});
  for (int j = 0; j < nt; ++j)
    d.ring_faces.push_back({d.n_interior + j, d.n_interior + (j + 1) % nt, R * dth, 1.0});

  // Virtual face from each innermost cell to the center value: area ~ (dr/4)*dth over
  // distance dr/2.
  d.center_conductance = 0.5 * dth;

  d.dist_boundary.resize(nt, nt);
  for (int j = 0; j < nt; ++j)
    for (int k = 0; k < nt; ++k) {
      double a = std::abs(j - k) * dth;
      a = std::min(a, 2.0 * std::numbers::pi - a);
      d.dist_boundary(j, k) = R * a;
    }
}

}  // namespace detail

inline Discretization build_discretization(const DomainSpec& spec,
                                           TraceMode trace_mode = TraceMode::LinearExtrapolation) {
  spec.validate();
  Discretization d;
  d.spec = spec;
  if (spec.kind == DomainKind::Interval)
    detail::build_interval(spec, d);
  else
    detail::build_disk(spec, d);

  // Trace stencils: boundary face partner cell plus the next cell inward.
  d.trace.resize(d.n_boundary);
  for (const Face& f : d.boundary_faces) {
    int j = f.b - d.n_interior;
    TraceStencil s;
    s.c0 = f.a;
    if (trace_mode == TraceMode::LinearExtrapolation) {
      if (d.is_interval()) {
        s.c1 = (j == 0) ? f.a + 1 : f.a - 1;
      } else {
        s.c1 = f.a - d.spec.angular;  // next ring inward, same angle
        if (s.c1 < 0) s.c1 = -1;
      }
      if (s.c1 >= 0) {
        s.w0 = 1.5;
        s.w1 = -0.5;
      }
    } else if (d.is_interval()) {
      s.c1 = (j == 0) ? f.a + 1 : f.a - 1;  // still recorded for normal derivatives
      s.w0 = 1.0;
      s.w1 = 0.0;
    } else {
      s.c1 = f.a - d.spec.angular >= 0 ? f.a - d.spec.angular : -1;
      s.w0 = 1.0;
      s.w1 = 0.0;
    }
    d.trace[j] = s;
  }

  const int m = d.total();
  d.cost.resize(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) d.cost(i, j) = (d.pos[i] - d.pos[j]).squaredNorm();
  return d;
}

// d_Gamma - |x-y| over boundary pairs; NaN across Interval components where the
// intrinsic distance is undefined. Entries are nonnegative (intrinsic >= chord).
inline Eigen::MatrixXd chord_vs_intrinsic_gap(const Discretization& d) {
  const int nb = d.n_boundary;
  Eigen::MatrixXd gap(nb, nb);
  for (int j = 0; j < nb; ++j)
    for (int k = 0; k < nb; ++k) {
      double dg = d.dist_boundary(j, k);
      if (!std::isfinite(dg)) {
        gap(j, k) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double chord = (d.pos[d.n_interior + j] - d.pos[d.n_interior + k]).norm();
      gap(j, k) = dg - chord;
    }
  return gap;
}

// --- discrete vector calculus over the face sets -------------------------------------
//
// A face field assigns one scalar (the a->b component) to every interior face, then
// every boundary face, in their stored order. The pairing below satisfies the exact
// summation-by-parts identity
//   sum_c phi_c div(u)_c vol_c + sum_f (Gphi)_f u_f area_f dist_f
//     = sum_{boundary faces} phiGamma * u_f * area_f .

inline Eigen::VectorXd face_gradient(const Discretization& d, const Eigen::VectorXd& cell_field,
                                     const Eigen::VectorXd& boundary_field) {
  Eigen::VectorXd g(d.interior_faces.size() + d.boundary_faces.size());
  int k = 0;
  for (const Face& f : d.interior_faces) g[k++] = (cell_field[f.b] - cell_field[f.a]) / f.dist;
  for (const Face& f : d.boundary_faces)
    g[k++] = (boundary_field[f.b - d.n_interior] - cell_field[f.a]) / f.dist;
  return g;
}

inline Eigen::VectorXd cell_divergence(const Discretization& d, const Eigen::VectorXd& face_field) {
  Eigen::VectorXd div = Eigen::VectorXd::Zero(d.n_interior);
  int k = 0;
  for (const Face& f : d.interior_faces) {
    double au = f.area * face_field[k++];
    div[f.a] += au;
    div[f.b] -= au;
  }
  for (const Face& f : d.boundary_faces) div[f.a] += f.area * face_field[k++];
  for (int c = 0; c < d.n_interior; ++c) div[c] /= d.weight[c];
  return div;
}

inline double boundary_flux_pairing(const Discretization& d, const Eigen::VectorXd& face_field,
                                    const Eigen::VectorXd& boundary_phi) {
  double s = 0.0;
  int k = static_cast<int>(d.interior_faces.size());
  for (const Face& f : d.boundary_faces) s += boundary_phi[f.b - d.n_interior] * f.area * face_field[k++];
  return s;
}

// Cell-centered gradient vectors, for momentum diagnostics. Boundary values close the
// stencil at cells touching Gamma.
inline std::vector<Eigen::Vector2d> cell_gradient(const Discretization& d,
                                                  const Eigen::VectorXd& cell_field,
                                                  const Eigen::VectorXd& boundary_field) {
  std::vector<Eigen::Vector2d> grad(d.n_interior, Eigen::Vector2d::Zero());
  if (d.is_interval()) {
    const int n = d.n_interior;
    auto value = [&](int i) -> double {
      if (i < 0) return boundary_field[0];
      if (i >= n) return boundary_field[1];
      return cell_field[i];
    };
    auto posx = [&](int i) -> double {
      if (i < 0) return 0.0;
      if (i >= n) return d.spec.extent;
      return d.pos[i].x();
    };
    for (int i = 0; i < n; ++i)
      grad[i] = Eigen::Vector2d((value(i + 1) - value(i - 1)) / (posx(i + 1) - posx(i - 1)), 0.0);
    return grad;
  }
  const int nr = d.spec.cells, nt = d.spec.angular;
  const double dr = d.spec.extent / nr;
  const double dth = 2.0 * std::numbers::pi / nt;
  auto cell = [nt](int i, int j) { return i * nt + j; };
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nt; ++j) {
      double rc = (i + 0.5) * dr;
      double th = (j + 0.5) * dth;
      // radial: central where possible, one-sided at the inner ring, trace-closed at the rim
      double dfr;
      if (i == 0) {
        dfr = (cell_field[cell(1, j)] - cell_field[cell(0, j)]) / dr;
      } else if (i == nr - 1) {
        dfr = (boundary_field[j] - cell_field[cell(nr - 2, j)]) / (1.5 * dr);
      } else {
        dfr = (cell_field[cell(i + 1, j)] - cell_field[cell(i - 1, j)]) / (2 * dr);
      }
      double dft = (cell_field[cell(i, (j + 1) % nt)] - cell_field[cell(i, (j + nt - 1) % nt)]) /
                   (2 * dth * rc);
      Eigen::Vector2d er(std::cos(th), std::sin(th)), et(-std::sin(th), std::cos(th));
      grad[i * nt + j] = dfr * er + dft * et;
    }
  return grad;
}

// Tangential derivative of a boundary field (Disk: periodic central difference; zero on
// the Interval's point boundary).
inline Eigen::VectorXd boundary_gradient(const Discretization& d, const Eigen::VectorXd& g) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d.n_boundary);
  if (d.is_interval()) return out;
  const int nt = d.n_boundary;
  const double ds = d.spec.extent * 2.0 * std::numbers::pi / nt;
  for (int j = 0; j < nt; ++j) out[j] = (g[(j + 1) % nt] - g[(j + nt - 1) % nt]) / (2 * ds);
  return out;
}

}  // namespace sticky

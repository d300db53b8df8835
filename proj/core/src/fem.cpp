#include "spdheat/fem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spdheat::fem {

namespace {

int face_axis(Face f) { return static_cast<int>(f) / 2; }
bool face_at_max(Face f) { return static_cast<int>(f) % 2 == 1; }

// 8x8 element stiffness for a cube element of edge h and conductivity C,
// integrated with 2x2x2 Gauss. The integrand is at most cubic per axis, so
// two-point Gauss is exact and the linear patch test holds at machine level.
std::array<std::array<double, 8>, 8> element_stiffness(const Mat3& c, double h) {
  std::array<std::array<double, 8>, 8> ke{};
  constexpr double gp = 0.57735026918962576451;  // 1/sqrt(3)
  const double det_j = (h / 2.0) * (h / 2.0) * (h / 2.0);
  const double map = 2.0 / h;  // reference-to-physical gradient factor

  for (int q = 0; q < 8; ++q) {
    const double xi = (q & 1) ? gp : -gp;
    const double eta = (q & 2) ? gp : -gp;
    const double zeta = (q & 4) ? gp : -gp;

    Vec3 grad[8];
    for (int a = 0; a < 8; ++a) {
      const double sx = (a & 1) ? 1.0 : -1.0;
      const double sy = (a & 2) ? 1.0 : -1.0;
      const double sz = (a & 4) ? 1.0 : -1.0;
      grad[a] = Vec3{sx * (1.0 + sy * eta) * (1.0 + sz * zeta),
                     sy * (1.0 + sx * xi) * (1.0 + sz * zeta),
                     sz * (1.0 + sx * xi) * (1.0 + sy * eta)} *
                (0.125 * map);
    }
    for (int a = 0; a < 8; ++a) {
      const Vec3 cga = c * grad[a];
      for (int b = 0; b < 8; ++b) ke[a][b] += dot(cga, grad[b]) * det_j;
    }
  }
  return ke;
}

// Assembled operator values on the mesh's cached pattern (no BCs applied).
std::vector<double> assemble_values(const HexMesh& mesh, const SpdTensor3& cond) {
  const auto ke = element_stiffness(cond.to_mat3(), mesh.spacing());
  std::vector<double> values(mesh.cols.size(), 0.0);
  const int ne = mesh.elems_per_edge();
  std::size_t s = 0;
  for (int ez = 0; ez < ne; ++ez)
    for (int ey = 0; ey < ne; ++ey)
      for (int ex = 0; ex < ne; ++ex)
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b) values[mesh.scatter[s++]] += ke[a][b];
  return values;
}

// Full load vector: Neumann surface loads plus the uniform volumetric source.
std::vector<double> full_load(const HexMesh& mesh, const CubeGeometry& geom) {
  std::vector<double> f = mesh.neumann_load;
  if (geom.source != 0.0) {
    const double h = mesh.spacing();
    const double per_elem = geom.source * h * h * h / 8.0;
    const int n = mesh.n;
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const int adj = ((i == 0 || i == n - 1) ? 1 : 2) * ((j == 0 || j == n - 1) ? 1 : 2) *
                          ((k == 0 || k == n - 1) ? 1 : 2);
          f[mesh.node_index(i, j, k)] += per_elem * adj;
        }
  }
  return f;
}

std::int32_t csr_find(const HexMesh& mesh, int row, int col) {
  const auto begin = mesh.cols.begin() + mesh.row_ptr[row];
  const auto end = mesh.cols.begin() + mesh.row_ptr[row + 1];
  const auto it = std::lower_bound(begin, end, col);
  return static_cast<std::int32_t>(it - mesh.cols.begin());
}

void spmv(const HexMesh& mesh, const std::vector<double>& values, const std::vector<double>& x,
          std::vector<double>& y) {
  const int nn = mesh.node_count();
  for (int i = 0; i < nn; ++i) {
    double s = 0.0;
    for (std::int64_t idx = mesh.row_ptr[i]; idx < mesh.row_ptr[i + 1]; ++idx)
      s += values[idx] * x[mesh.cols[idx]];
    y[i] = s;
  }
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

void CubeGeometry::validate() const {
  if (!(side > 0.0) || !(patch_side > 0.0) || patch_side > side)
    throw ValidationError("CubeGeometry: need 0 < patch_side <= side");
  if (!std::isfinite(neumann_flux) || !std::isfinite(dirichlet_temp) || !std::isfinite(source))
    throw ValidationError("CubeGeometry: flux, temperature and source must be finite");
  if (sample_grid < 2) throw ValidationError("CubeGeometry: sample_grid must be >= 2");
}

HexMesh build_mesh(const CubeGeometry& geom, int n) {
  geom.validate();
  if (n < 3) throw ValidationError("build_mesh: need n >= 3 nodes per edge");
  if ((n - 1) % (geom.sample_grid - 1) != 0)
    throw InvalidResolutionError("build_mesh: sample grid g-1 must divide n-1 (g=" +
                                 std::to_string(geom.sample_grid) + ", n=" + std::to_string(n) +
                                 ")");

  HexMesh mesh;
  mesh.n = n;
  mesh.geom = geom;

  const int nn = n * n * n;
  const double h = geom.side / (n - 1);
  const double half = geom.side / 2.0;

  mesh.coords.resize(nn);
  mesh.tag.assign(nn, NodeTag::Interior);
  mesh.dirichlet_value.assign(nn, 0.0);
  mesh.neumann_load.assign(nn, 0.0);

  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int id = mesh.node_index(i, j, k);
        mesh.coords[id] = Vec3{-half + i * h, -half + j * h, -half + k * h};
        if (i == 0 || i == n - 1 || j == 0 || j == n - 1 || k == 0 || k == n - 1)
          mesh.tag[id] = NodeTag::Insulated;
      }

  // Patch tagging: centered square of side patch_side on each face. The five
  // non-Neumann patches are Dirichlet; Dirichlet wins where patches would
  // ever meet.
  const double p_half = geom.patch_side / 2.0;
  const double tol = 1e-9 * geom.side;
  for (int f = 0; f < 6; ++f) {
    const Face face = static_cast<Face>(f);
    const int axis = face_axis(face);
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    const int fixed = face_at_max(face) ? n - 1 : 0;

    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        int ijk[3];
        ijk[axis] = fixed;
        ijk[u] = a;
        ijk[v] = b;
        const int id = mesh.node_index(ijk[0], ijk[1], ijk[2]);
        const Vec3& x = mesh.coords[id];
        if (std::abs(x[u]) <= p_half + tol && std::abs(x[v]) <= p_half + tol) {
          if (face == geom.neumann_face) {
            if (mesh.tag[id] != NodeTag::DirichletPatch) mesh.tag[id] = NodeTag::NeumannPatch;
          } else {
            mesh.tag[id] = NodeTag::DirichletPatch;
            mesh.dirichlet_value[id] = geom.dirichlet_temp;
          }
        }
      }
  }

  // Consistent Neumann load: integrate flux * N_i over the patch square,
  // face element by face element. Bilinear shapes make the integral a
  // product of 1D linear-segment integrals over the overlap rectangle.
  {
    const Face face = geom.neumann_face;
    const int axis = face_axis(face);
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    const int fixed = face_at_max(face) ? n - 1 : 0;

    auto seg_integrals = [&](double lo, double hi, double e0) {
      // Overlap of [e0, e0+h] with [lo, hi] in normalized coords s in [0,1];
      // returns integrals of (1-s) and s over the overlap.
      const double s0 = std::clamp((lo - e0) / h, 0.0, 1.0);
      const double s1 = std::clamp((hi - e0) / h, 0.0, 1.0);
      const double i_hi = 0.5 * (s1 * s1 - s0 * s0);
      const double i_lo = (s1 - s0) - i_hi;
      return std::array<double, 2>{i_lo, i_hi};
    };

    for (int eb = 0; eb < n - 1; ++eb)
      for (int ea = 0; ea < n - 1; ++ea) {
        const double u0 = -half + ea * h;
        const double v0 = -half + eb * h;
        const auto iu = seg_integrals(-p_half, p_half, u0);
        const auto iv = seg_integrals(-p_half, p_half, v0);
        for (int db = 0; db < 2; ++db)
          for (int da = 0; da < 2; ++da) {
            const double w = iu[da] * iv[db] * h * h * geom.neumann_flux;
            if (w == 0.0) continue;
            int ijk[3];
            ijk[axis] = fixed;
            ijk[u] = ea + da;
            ijk[v] = eb + db;
            mesh.neumann_load[mesh.node_index(ijk[0], ijk[1], ijk[2])] += w;
          }
      }
  }

  // 27-point CSR pattern, columns ascending within each row.
  mesh.row_ptr.assign(nn + 1, 0);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int stencil = ((i > 0) + 1 + (i < n - 1)) * ((j > 0) + 1 + (j < n - 1)) *
                            ((k > 0) + 1 + (k < n - 1));
        mesh.row_ptr[mesh.node_index(i, j, k) + 1] = stencil;
      }
  for (int i = 0; i < nn; ++i) mesh.row_ptr[i + 1] += mesh.row_ptr[i];

  mesh.cols.resize(mesh.row_ptr[nn]);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        std::int64_t at = mesh.row_ptr[mesh.node_index(i, j, k)];
        for (int dk = -1; dk <= 1; ++dk)
          for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
              const int ii = i + di, jj = j + dj, kk = k + dk;
              if (ii < 0 || ii >= n || jj < 0 || jj >= n || kk < 0 || kk >= n) continue;
              mesh.cols[at++] = mesh.node_index(ii, jj, kk);
            }
      }

  // Element scatter map into the CSR value array.
  const int ne = n - 1;
  mesh.scatter.resize(static_cast<std::size_t>(ne) * ne * ne * 64);
  std::size_t s = 0;
  for (int ez = 0; ez < ne; ++ez)
    for (int ey = 0; ey < ne; ++ey)
      for (int ex = 0; ex < ne; ++ex) {
        const auto ids = mesh.element_nodes(ex, ey, ez);
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b) mesh.scatter[s++] = csr_find(mesh, ids[a], ids[b]);
      }

  return mesh;
}

TemperatureField solve(const CubeGeometry& geom, const HexMesh& mesh, const SpdTensor3& cond,
                       const SolveOptions& opts) {
  const int nn = mesh.node_count();
  std::vector<double> values = assemble_values(mesh, cond);
  std::vector<double> rhs = full_load(mesh, geom);

  // Dirichlet elimination, keeping the original diagonal so the reduced
  // operator stays well scaled: row/column zeroed, K_dd * T_D on both sides.
  for (int d = 0; d < nn; ++d) {
    if (mesh.tag[d] != NodeTag::DirichletPatch) continue;
    const double td = mesh.dirichlet_value[d];
    double diag = 0.0;
    for (std::int64_t idx = mesh.row_ptr[d]; idx < mesh.row_ptr[d + 1]; ++idx) {
      const int j = mesh.cols[idx];
      if (j == d) {
        diag = values[idx];
        continue;
      }
      values[idx] = 0.0;
      // symmetric pattern: (j, d) exists whenever (d, j) does
      const std::int32_t jidx = csr_find(mesh, j, d);
      if (mesh.tag[j] != NodeTag::DirichletPatch) rhs[j] -= values[jidx] * td;
      values[jidx] = 0.0;
    }
    rhs[d] = diag * td;
  }

  // Jacobi-preconditioned CG.
  std::vector<double> x(nn, geom.dirichlet_temp);
  if (opts.initial_guess) {
    if (static_cast<int>(opts.initial_guess->size()) != nn)
      throw ShapeMismatchError("solve: initial guess size mismatch");
    x = *opts.initial_guess;
  }
  for (int d = 0; d < nn; ++d)
    if (mesh.tag[d] == NodeTag::DirichletPatch) x[d] = mesh.dirichlet_value[d];

  std::vector<double> inv_diag(nn, 1.0);
  for (int i = 0; i < nn; ++i)
    for (std::int64_t idx = mesh.row_ptr[i]; idx < mesh.row_ptr[i + 1]; ++idx)
      if (mesh.cols[idx] == i && values[idx] != 0.0) inv_diag[i] = 1.0 / values[idx];

  const double bnorm = norm2(rhs);
  if (bnorm == 0.0) return {&mesh, std::move(x)};
  const double target = opts.rel_tol * bnorm;
  const double contract_floor = 1e-10 * bnorm;  // the solve contract

  std::vector<double> r(nn), z(nn), p(nn), ap(nn);
  spmv(mesh, values, x, ap);
  for (int i = 0; i < nn; ++i) r[i] = rhs[i] - ap[i];
  for (int i = 0; i < nn; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = 0.0;
  for (int i = 0; i < nn; ++i) rz += r[i] * z[i];

  const long max_iter = static_cast<long>(opts.max_iter_factor) * nn;
  double best_res = norm2(r);
  long best_iter = 0;

  for (long iter = 0; iter <= max_iter; ++iter) {
    const double rnorm = norm2(r);
    if (rnorm < best_res) {
      best_res = rnorm;
      best_iter = iter;
    }
    const bool stagnant = iter - best_iter > 200;
    if (rnorm <= target || (stagnant && rnorm <= contract_floor)) {
      // accept on the true residual, not the recursive one
      spmv(mesh, values, x, ap);
      double tn = 0.0;
      for (int i = 0; i < nn; ++i) {
        const double ri = rhs[i] - ap[i];
        tn += ri * ri;
      }
      tn = std::sqrt(tn);
      if (tn <= target || (stagnant && tn <= contract_floor)) break;
      for (int i = 0; i < nn; ++i) r[i] = rhs[i] - ap[i];
      for (int i = 0; i < nn; ++i) z[i] = inv_diag[i] * r[i];
      p = z;
      rz = 0.0;
      for (int i = 0; i < nn; ++i) rz += r[i] * z[i];
      best_iter = iter;  // restart the stagnation window
    }
    if (iter == max_iter)
      throw SolverDivergedError("solve: conjugate gradients exceeded iteration cap");

    spmv(mesh, values, p, ap);
    double pap = 0.0;
    for (int i = 0; i < nn; ++i) pap += p[i] * ap[i];
    if (!(pap > 0.0)) throw SolverDivergedError("solve: operator lost positive definiteness");
    const double alpha = rz / pap;
    for (int i = 0; i < nn; ++i) x[i] += alpha * p[i];
    for (int i = 0; i < nn; ++i) r[i] -= alpha * ap[i];
    for (int i = 0; i < nn; ++i) z[i] = inv_diag[i] * r[i];
    double rz_new = 0.0;
    for (int i = 0; i < nn; ++i) rz_new += r[i] * z[i];
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < nn; ++i) p[i] = z[i] + beta * p[i];
  }

  for (int d = 0; d < nn; ++d)
    if (mesh.tag[d] == NodeTag::DirichletPatch) x[d] = mesh.dirichlet_value[d];
  return {&mesh, std::move(x)};
}

double dirichlet_reaction_sum(const TemperatureField& field, const CubeGeometry& geom,
                              const SpdTensor3& cond) {
  const HexMesh& mesh = *field.mesh;
  const std::vector<double> values = assemble_values(mesh, cond);
  const std::vector<double> f = full_load(mesh, geom);
  std::vector<double> kt(mesh.node_count());
  spmv(mesh, values, field.values, kt);

  double sum = 0.0;
  for (int d = 0; d < mesh.node_count(); ++d)
    if (mesh.tag[d] == NodeTag::DirichletPatch) sum += kt[d] - f[d];
  return sum;
}

double energy_balance(const TemperatureField& field, const CubeGeometry& geom,
                      const SpdTensor3& cond) {
  const HexMesh& mesh = *field.mesh;
  const std::vector<double> f = full_load(mesh, geom);
  double influx = 0.0;
  for (double fi : f) influx += fi;

  const double net = dirichlet_reaction_sum(field, geom, cond) + influx;
  if (std::abs(influx) < 1e-300) return std::abs(net);
  return std::abs(net) / std::abs(influx);
}

SampleGrid extract_grid(const TemperatureField& field, int g) {
  const HexMesh& mesh = *field.mesh;
  if (g < 2 || (mesh.n - 1) % (g - 1) != 0)
    throw InvalidResolutionError("extract_grid: g-1 must divide n-1");
  const int stride = (mesh.n - 1) / (g - 1);

  SampleGrid grid;
  grid.g = g;
  grid.values.reserve(static_cast<std::size_t>(g) * g * g);
  for (int k = 0; k < g; ++k)
    for (int j = 0; j < g; ++j)
      for (int i = 0; i < g; ++i)
        grid.values.push_back(field.values[mesh.node_index(i * stride, j * stride, k * stride)]);
  return grid;
}

}  // namespace spdheat::fem

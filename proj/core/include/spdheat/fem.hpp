#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "spdheat/errors.hpp"
#include "spdheat/spd.hpp"

namespace spdheat::fem {

enum class Face : std::uint8_t { XNeg = 0, XPos, YNeg, YPos, ZNeg, ZPos };

enum class NodeTag : std::uint8_t { Interior, Insulated, DirichletPatch, NeumannPatch };

// Patched cube: six centered square patches, one per face. One patch carries
// an inward Neumann flux, the other five hold a fixed temperature, the rest
// of the boundary is insulated.
struct CubeGeometry {
  double side = 0.05;              // m
  double patch_side = 0.005;       // m
  Face neumann_face = Face::XNeg;
  double neumann_flux = 50.0e3;    // W/m^2, heat entering the domain
  double dirichlet_temp = 273.15;  // K
  double source = 0.0;             // uniform volumetric source, W/m^3
  int sample_grid = 11;            // g, output grid points per edge

  void validate() const;
};

// Structured trilinear hex mesh over the cube, nodes ordered x-fastest.
// Boundary conditions are realized as per-node tags plus precomputed
// consistent Neumann surface loads; the sparsity pattern of the Galerkin
// operator is cached alongside (27-point stencil).
struct HexMesh {
  int n = 0;  // nodes per edge
  CubeGeometry geom;

  std::vector<Vec3> coords;              // n^3
  std::vector<NodeTag> tag;              // n^3
  std::vector<double> dirichlet_value;   // n^3, meaningful where tag == DirichletPatch
  std::vector<double> neumann_load;      // n^3, consistent nodal loads, W

  // CSR pattern of the assembled operator plus the element scatter map
  // (value index for each element-local (a, b) pair).
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> cols;
  std::vector<std::int32_t> scatter;  // elem_count * 64

  int node_count() const { return n * n * n; }
  int elems_per_edge() const { return n - 1; }
  int elem_count() const { return (n - 1) * (n - 1) * (n - 1); }
  double spacing() const { return geom.side / (n - 1); }

  int node_index(int i, int j, int k) const { return i + n * (j + n * k); }

  std::array<int, 8> element_nodes(int ex, int ey, int ez) const {
    std::array<int, 8> ids{};
    for (int a = 0; a < 8; ++a)
      ids[a] = node_index(ex + (a & 1), ey + ((a >> 1) & 1), ez + ((a >> 2) & 1));
    return ids;
  }
};

HexMesh build_mesh(const CubeGeometry& geom, int n);

// Solved nodal temperatures over a mesh. The mesh must outlive the field.
struct TemperatureField {
  const HexMesh* mesh = nullptr;
  std::vector<double> values;  // K, one per node
};

// Output grid: g^3 equally spaced points coinciding with mesh nodes,
// x-fastest ordering.
struct SampleGrid {
  int g = 0;
  std::vector<double> values;  // K
};

struct SolveOptions {
  // Default is a decade tighter than the 1e-10 contract so the discrete
  // energy balance has headroom.
  double rel_tol = 1e-11;
  int max_iter_factor = 10;  // cap = factor * unknown count
  const std::vector<double>* initial_guess = nullptr;
};

// Assembles the Galerkin system K T = f (element stiffness integrated with
// 2x2x2 Gauss), eliminates Dirichlet rows, applies the Neumann patch as a
// consistent surface load, and solves with Jacobi-preconditioned conjugate
// gradients.
TemperatureField solve(const CubeGeometry& geom, const HexMesh& mesh, const SpdTensor3& cond,
                       const SolveOptions& opts = {});

// |net boundary flux| / |influx|, from the assembled operator's reaction
// forces at Dirichlet nodes. Returns the absolute net flux when there is no
// influx to normalize by.
double energy_balance(const TemperatureField& field, const CubeGeometry& geom,
                      const SpdTensor3& cond);

// Sum of discrete reaction forces (outflow) at Dirichlet nodes, W.
double dirichlet_reaction_sum(const TemperatureField& field, const CubeGeometry& geom,
                              const SpdTensor3& cond);

// Copies the g^3 coarse grid out of a solved field; g - 1 must divide n - 1.
SampleGrid extract_grid(const TemperatureField& field, int g);

}  // namespace spdheat::fem

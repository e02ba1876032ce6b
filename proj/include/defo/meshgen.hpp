#pragma once

#include "defo/tetmesh.hpp"

namespace defo::tetmesh {

/// Unit-ish reference tet (vertices at origin and the three axes, scaled).
TetMesh make_single_tet(double scale = 0.1);

/// Two tets sharing one face.
TetMesh make_two_tets(double scale = 0.1);

/// Voxel solid: each occupied cell is split into six tets (Freudenthal,
/// shared main diagonal) so neighboring cells conform face-to-face.
struct Voxel {
    int x, y, z;
    auto operator<=>(const Voxel&) const = default;
};
TetMesh make_from_voxels(const std::vector<Voxel>& cells, double cell_size,
                         const Vec3& origin = Vec3::Zero());

/// Rectangular block, nx*ny*nz cells. Default: 5x4x2 cells of 0.06 m
/// (~0.3 m diameter desk object, 240 tets).
TetMesh make_box(int nx = 5, int ny = 4, int nz = 2, double cell_size = 0.06);

/// L-shaped block (two orthogonal arms).
TetMesh make_lshape(int arm = 5, int width = 2, double cell_size = 0.05);

/// Straight chain, nx cells of 1x1 cross-section. Bendable under actions.
TetMesh make_snake(int nx = 16, double cell_size = 0.02);

/// U-shaped chain whose two ends face each other across a small gap:
/// Euclidean-near, geodesically-far. `arm` cells per arm, ends separated by
/// `gap_rows` empty rows.
TetMesh make_folded_chain(int arm = 14, int gap_rows = 2, double cell_size = 0.02);

/// Four-limb plus-shaped toy: central block with limbs along +-x and +-y.
TetMesh make_star(int limb = 5, double cell_size = 0.04);

/// Built-in shape lookup by name ("box", "lshape", "snake", "folded_chain",
/// "toy"); throws ValidationError for unknown names.
TetMesh make_named_shape(const std::string& name);
std::vector<std::string> named_shapes();

}  // namespace defo::tetmesh

#pragma once

#include "defo/common.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace defo::tetmesh {

/// Rest-pose tetrahedral object. The tet graph (face-sharing adjacency with
/// metric edge weights) is fixed under deformation; only vertex positions move.
struct TetMesh {
    std::vector<Vec3> vertices;  // rest positions, meters
    std::vector<std::array<int, 4>> tets;
    std::vector<std::vector<int>> adjacency;      // face-sharing neighbor tets
    std::vector<std::vector<double>> edge_weights;  // parallel to adjacency

    // derived at build time
    std::vector<int> vertex_tet;  // lowest-index incident tet per vertex
    std::vector<std::array<int, 3>> surface_faces;  // boundary triangles
    std::vector<int> surface_vertices;              // sorted, unique
    Aabb rest_bbox;
    double snap_radius = 0.0;
    int component_count = 1;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_tets() const { return static_cast<int>(tets.size()); }

    Vec3 tet_centroid(int t, const std::vector<Vec3>& positions) const;
    Vec3 rest_centroid(int t) const { return tet_centroid(t, vertices); }

    /// Assembles adjacency, metric edge weights, surface topology, and the
    /// point-location acceleration fields. Throws ValidationError if tet
    /// indices are malformed; connectivity is only recorded (see
    /// `invariant_violations`) so that error paths stay testable.
    static TetMesh build(std::vector<Vec3> vertices, std::vector<std::array<int, 4>> tets);

    /// All invariant violations, one human-readable item each. Empty for a
    /// valid object.
    std::vector<std::string> invariant_violations() const;
};

/// Barycentric coordinates of p in tet t at the given vertex positions.
/// Returns nullopt for a degenerate (near zero-volume) tet.
std::optional<Eigen::Vector4d> barycentric(const TetMesh& mesh, const std::vector<Vec3>& positions,
                                           int t, const Vec3& p);

/// Strict containment query: lowest-index tet containing p (all barycentric
/// coordinates >= -eps), or nullopt. Degenerate tets are skipped.
std::optional<int> contains_tet(const TetMesh& mesh, const std::vector<Vec3>& positions,
                                const Vec3& p, double eps = 1e-9);

/// Containment with fallback: if no tet contains p, snaps to the tet with the
/// nearest centroid when that centroid is within mesh.snap_radius.
std::optional<int> locate_tet(const TetMesh& mesh, const std::vector<Vec3>& positions,
                              const Vec3& p, double eps = 1e-9);

/// Dense all-pairs shortest-path distances over the tet graph.
struct GeodesicTable {
    Eigen::MatrixXd dist;  // |tets| x |tets|, meters
    std::string mesh_id;

    /// Largest finite entry: the geodesic diameter of the object.
    double diameter() const { return dist.maxCoeff(); }
};

/// Content hash of a mesh (vertices + tets), used to pair tables with meshes.
std::string mesh_content_id(const TetMesh& mesh);

/// All-pairs shortest paths (Dijkstra from every tet). Throws RuntimeError
/// naming the components if the tet graph is disconnected.
GeodesicTable geodesic_table(const TetMesh& mesh);

/// Deformation-consistent distance between two points in a (possibly
/// deformed) pose: table lookup between their containing tets. Throws
/// RuntimeError if either point cannot be located.
double geodesic(const TetMesh& mesh, const GeodesicTable& table,
                const std::vector<Vec3>& positions, const Vec3& p, const Vec3& q);

/// JSON mesh file I/O (`{"vertices": [[x,y,z],...], "tets": [[i,j,k,l],...]}`,
/// meters). The loader validates all invariants and reports every violation.
TetMesh load_mesh(const std::string& path);
void save_mesh(const TetMesh& mesh, const std::string& path);

}  // namespace defo::tetmesh

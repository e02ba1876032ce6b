#include "defo/tetmesh.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>

namespace defo::tetmesh {

using json = nlohmann::json;

Vec3 TetMesh::tet_centroid(int t, const std::vector<Vec3>& positions) const {
    const auto& tet = tets[t];
    return 0.25 * (positions[tet[0]] + positions[tet[1]] + positions[tet[2]] + positions[tet[3]]);
}

TetMesh TetMesh::build(std::vector<Vec3> vertices, std::vector<std::array<int, 4>> tets) {
    TetMesh m;
    m.vertices = std::move(vertices);
    m.tets = std::move(tets);
    const int nv = m.num_vertices();
    const int nt = m.num_tets();

    std::vector<std::string> bad;
    for (int t = 0; t < nt; ++t) {
        const auto& tet = m.tets[t];
        for (int k = 0; k < 4; ++k) {
            if (tet[k] < 0 || tet[k] >= nv)
                bad.push_back("tet " + std::to_string(t) + ": vertex index " +
                              std::to_string(tet[k]) + " out of range");
        }
        auto s = tet;
        std::sort(s.begin(), s.end());
        if (std::adjacent_find(s.begin(), s.end()) != s.end())
            bad.push_back("tet " + std::to_string(t) + ": repeated vertex index");
    }
    if (!bad.empty()) throw ValidationError("malformed tet mesh", bad);

    // face-sharing adjacency: map sorted face triple -> incident tets
    std::map<std::array<int, 3>, std::vector<int>> faces;
    static constexpr int kFace[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
    for (int t = 0; t < nt; ++t) {
        for (const auto& f : kFace) {
            std::array<int, 3> key = {m.tets[t][f[0]], m.tets[t][f[1]], m.tets[t][f[2]]};
            std::sort(key.begin(), key.end());
            faces[key].push_back(t);
        }
    }
    m.adjacency.assign(nt, {});
    for (const auto& [key, ts] : faces) {
        if (ts.size() == 1) m.surface_faces.push_back(key);
        for (size_t a = 0; a < ts.size(); ++a)
            for (size_t b = 0; b < ts.size(); ++b)
                if (a != b) m.adjacency[ts[a]].push_back(ts[b]);
    }
    for (auto& adj : m.adjacency) std::sort(adj.begin(), adj.end());

    // metric edge weights: rest-pose centroid-to-centroid distances
    m.edge_weights.assign(nt, {});
    for (int t = 0; t < nt; ++t) {
        Vec3 c = m.rest_centroid(t);
        for (int nb : m.adjacency[t])
            m.edge_weights[t].push_back((c - m.rest_centroid(nb)).norm());
    }

    m.vertex_tet.assign(nv, -1);
    for (int t = nt - 1; t >= 0; --t)
        for (int v : m.tets[t]) m.vertex_tet[v] = t;

    std::set<int> sv;
    for (const auto& f : m.surface_faces) sv.insert(f.begin(), f.end());
    m.surface_vertices.assign(sv.begin(), sv.end());

    m.rest_bbox = Aabb::of(m.vertices);
    m.snap_radius = 0.05 * m.rest_bbox.diagonal();

    // connected components of the tet graph
    std::vector<int> comp(nt, -1);
    int ncomp = 0;
    for (int s = 0; s < nt; ++s) {
        if (comp[s] >= 0) continue;
        std::vector<int> stack = {s};
        comp[s] = ncomp;
        while (!stack.empty()) {
            int t = stack.back();
            stack.pop_back();
            for (int nb : m.adjacency[t])
                if (comp[nb] < 0) {
                    comp[nb] = ncomp;
                    stack.push_back(nb);
                }
        }
        ++ncomp;
    }
    m.component_count = std::max(ncomp, 1);
    return m;
}

std::vector<std::string> TetMesh::invariant_violations() const {
    std::vector<std::string> out;
    const int nt = num_tets();
    for (int v = 0; v < num_vertices(); ++v)
        if (!vertices[v].allFinite())
            out.push_back("vertex " + std::to_string(v) + ": non-finite coordinate");
    for (int t = 0; t < nt; ++t) {
        for (size_t k = 0; k < adjacency[t].size(); ++k) {
            int nb = adjacency[t][k];
            const auto& back = adjacency[nb];
            if (std::find(back.begin(), back.end(), t) == back.end())
                out.push_back("adjacency not symmetric between tets " + std::to_string(t) +
                              " and " + std::to_string(nb));
            if (!(edge_weights[t][k] > 0.0))
                out.push_back("edge weight " + std::to_string(t) + "->" + std::to_string(nb) +
                              " not strictly positive");
        }
        if (adjacency[t].size() != edge_weights[t].size())
            out.push_back("tet " + std::to_string(t) + ": adjacency/edge_weights length mismatch");
    }
    if (component_count != 1)
        out.push_back("tet graph has " + std::to_string(component_count) +
                      " connected components (must be 1)");
    return out;
}

std::optional<Eigen::Vector4d> barycentric(const TetMesh& mesh, const std::vector<Vec3>& positions,
                                           int t, const Vec3& p) {
    const auto& tet = mesh.tets[t];
    const Vec3& v3 = positions[tet[3]];
    Eigen::Matrix3d T;
    T.col(0) = positions[tet[0]] - v3;
    T.col(1) = positions[tet[1]] - v3;
    T.col(2) = positions[tet[2]] - v3;
    double det = T.determinant();
    double scale = T.cwiseAbs().maxCoeff();
    if (std::abs(det) <= 1e-12 * scale * scale * scale) return std::nullopt;  // degenerate
    Vec3 l = T.partialPivLu().solve(p - v3);
    Eigen::Vector4d bary;
    bary << l[0], l[1], l[2], 1.0 - l.sum();
    return bary;
}

std::optional<int> contains_tet(const TetMesh& mesh, const std::vector<Vec3>& positions,
                                const Vec3& p, double eps) {
    for (int t = 0; t < mesh.num_tets(); ++t) {
        auto b = barycentric(mesh, positions, t, p);
        if (b && (b->array() >= -eps).all()) return t;
    }
    return std::nullopt;
}

std::optional<int> locate_tet(const TetMesh& mesh, const std::vector<Vec3>& positions,
                              const Vec3& p, double eps) {
    if (auto t = contains_tet(mesh, positions, p, eps)) return t;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh.num_tets(); ++t) {
        double d = (mesh.tet_centroid(t, positions) - p).norm();
        if (d < best_d) {
            best_d = d;
            best = t;
        }
    }
    if (best >= 0 && best_d <= mesh.snap_radius) return best;
    return std::nullopt;
}

std::string mesh_content_id(const TetMesh& mesh) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& v : mesh.vertices) h = fnv1a(v.data(), 3 * sizeof(double), h);
    for (const auto& t : mesh.tets) h = fnv1a(t.data(), 4 * sizeof(int), h);
    return hash_hex(h);
}

GeodesicTable geodesic_table(const TetMesh& mesh) {
    const int nt = mesh.num_tets();
    if (mesh.component_count != 1) {
        std::vector<int> comp(nt, -1);
        int ncomp = 0;
        for (int s = 0; s < nt; ++s) {
            if (comp[s] >= 0) continue;
            std::vector<int> stack = {s};
            comp[s] = ncomp;
            while (!stack.empty()) {
                int t = stack.back();
                stack.pop_back();
                for (int nb : mesh.adjacency[t])
                    if (comp[nb] < 0) {
                        comp[nb] = ncomp;
                        stack.push_back(nb);
                    }
            }
            ++ncomp;
        }
        std::string msg = "tet graph is disconnected; components:";
        for (int c = 0; c < ncomp; ++c) {
            msg += " {";
            bool first = true;
            for (int t = 0; t < nt; ++t)
                if (comp[t] == c) {
                    if (!first) msg += ",";
                    msg += std::to_string(t);
                    first = false;
                }
            msg += "}";
        }
        throw RuntimeError(msg);
    }

    GeodesicTable table;
    table.mesh_id = mesh_content_id(mesh);
    table.dist.setConstant(nt, nt, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    for (int src = 0; src < nt; ++src) {
        auto row = table.dist.row(src);
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
        row[src] = 0.0;
        heap.emplace(0.0, src);
        while (!heap.empty()) {
            auto [d, t] = heap.top();
            heap.pop();
            if (d > row[t]) continue;
            for (size_t k = 0; k < mesh.adjacency[t].size(); ++k) {
                int nb = mesh.adjacency[t][k];
                double nd = d + mesh.edge_weights[t][k];
                if (nd < row[nb]) {
                    row[nb] = nd;
                    heap.emplace(nd, nb);
                }
            }
        }
    }
    // the two directed sums over a path can round differently; take the min
    // so lookups are exactly symmetric
    for (int i = 0; i < nt; ++i)
        for (int j = i + 1; j < nt; ++j) {
            double d = std::min(table.dist(i, j), table.dist(j, i));
            table.dist(i, j) = d;
            table.dist(j, i) = d;
        }
    return table;
}

double geodesic(const TetMesh& mesh, const GeodesicTable& table,
                const std::vector<Vec3>& positions, const Vec3& p, const Vec3& q) {
    auto tp = locate_tet(mesh, positions, p);
    if (!tp)
        throw RuntimeError("geodesic: point (" + std::to_string(p.x()) + ", " +
                           std::to_string(p.y()) + ", " + std::to_string(p.z()) +
                           ") not locatable on mesh");
    auto tq = locate_tet(mesh, positions, q);
    if (!tq)
        throw RuntimeError("geodesic: point (" + std::to_string(q.x()) + ", " +
                           std::to_string(q.y()) + ", " + std::to_string(q.z()) +
                           ") not locatable on mesh");
    return table.dist(*tp, *tq);
}

TetMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open mesh file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("mesh file " + path + ": invalid JSON: " + e.what());
    }
    std::vector<std::string> bad;
    if (!j.contains("vertices") || !j["vertices"].is_array())
        bad.push_back("missing or non-array field: vertices");
    if (!j.contains("tets") || !j["tets"].is_array())
        bad.push_back("missing or non-array field: tets");
    if (!bad.empty()) throw ValidationError("mesh file " + path, bad);

    std::vector<Vec3> vertices;
    for (size_t i = 0; i < j["vertices"].size(); ++i) {
        const auto& v = j["vertices"][i];
        if (!v.is_array() || v.size() != 3 || !v[0].is_number()) {
            bad.push_back("vertices[" + std::to_string(i) + "]: expected [x,y,z]");
            continue;
        }
        vertices.emplace_back(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }
    std::vector<std::array<int, 4>> tets;
    for (size_t i = 0; i < j["tets"].size(); ++i) {
        const auto& t = j["tets"][i];
        if (!t.is_array() || t.size() != 4 || !t[0].is_number_integer()) {
            bad.push_back("tets[" + std::to_string(i) + "]: expected [i,j,k,l]");
            continue;
        }
        tets.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>(), t[3].get<int>()});
    }
    if (!bad.empty()) throw ValidationError("mesh file " + path, bad);
    if (tets.empty()) throw ValidationError("mesh file " + path + ": no tets");

    TetMesh mesh = TetMesh::build(std::move(vertices), std::move(tets));
    auto violations = mesh.invariant_violations();
    if (!violations.empty()) throw ValidationError("mesh file " + path, violations);
    return mesh;
}

void save_mesh(const TetMesh& mesh, const std::string& path) {
    json j;
    j["version"] = kToolVersion;
    j["id"] = mesh_content_id(mesh);
    j["vertices"] = json::array();
    for (const auto& v : mesh.vertices) j["vertices"].push_back({v.x(), v.y(), v.z()});
    j["tets"] = json::array();
    for (const auto& t : mesh.tets) j["tets"].push_back({t[0], t[1], t[2], t[3]});
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write mesh file: " + path);
    out << j.dump() << "\n";
}

}  // namespace defo::tetmesh

#include "defo/meshgen.hpp"
#include "defo/tetmesh.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace defo;
using namespace defo::tetmesh;

namespace {

// Independent containment oracle: signed-volume ratios instead of the linear
// solve used by the implementation.
double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return (b - a).cross(c - a).dot(d - a) / 6.0;
}

bool oracle_contains(const TetMesh& mesh, const std::vector<Vec3>& pos, int t, const Vec3& p,
                     double eps = 1e-9) {
    const auto& tet = mesh.tets[t];
    Vec3 v0 = pos[tet[0]], v1 = pos[tet[1]], v2 = pos[tet[2]], v3 = pos[tet[3]];
    double vol = signed_volume(v0, v1, v2, v3);
    if (vol == 0.0) return false;
    double b0 = signed_volume(p, v1, v2, v3) / vol;
    double b1 = signed_volume(v0, p, v2, v3) / vol;
    double b2 = signed_volume(v0, v1, p, v3) / vol;
    double b3 = signed_volume(v0, v1, v2, p) / vol;
    return b0 >= -eps && b1 >= -eps && b2 >= -eps && b3 >= -eps;
}

// Floyd-Warshall oracle over the tet graph.
Eigen::MatrixXd floyd_warshall(const TetMesh& mesh) {
    int n = mesh.num_tets();
    Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) d(i, i) = 0.0;
    for (int i = 0; i < n; ++i)
        for (size_t k = 0; k < mesh.adjacency[i].size(); ++k)
            d(i, mesh.adjacency[i][k]) = std::min(d(i, mesh.adjacency[i][k]), mesh.edge_weights[i][k]);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (d(i, k) + d(k, j) < d(i, j)) d(i, j) = d(i, k) + d(k, j);
    return d;
}

// Random connected graph with tet-like degree cap 4 and dyadic edge weights
// (exactly representable, so both shortest-path routes sum identically).
TetMesh random_tet_graph(Rng& rng, int max_tets) {
    int n = 2 + static_cast<int>(rng.uniform_int(max_tets - 1));
    TetMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    m.tets.assign(n, {0, 1, 2, 3});
    m.adjacency.assign(n, {});
    m.edge_weights.assign(n, {});
    m.component_count = 1;
    auto degree = [&](int i) { return m.adjacency[i].size(); };
    auto connect = [&](int a, int b) {
        double w = (1.0 + static_cast<double>(rng.uniform_int(128))) / 64.0;
        m.adjacency[a].push_back(b);
        m.edge_weights[a].push_back(w);
        m.adjacency[b].push_back(a);
        m.edge_weights[b].push_back(w);
    };
    for (int i = 1; i < n; ++i) {
        int parent = static_cast<int>(rng.uniform_int(i));
        while (degree(parent) >= 3) parent = static_cast<int>(rng.uniform_int(i));
        connect(i, parent);
    }
    int extras = static_cast<int>(rng.uniform_int(n));
    for (int e = 0; e < extras; ++e) {
        int a = static_cast<int>(rng.uniform_int(n));
        int b = static_cast<int>(rng.uniform_int(n));
        if (a == b || degree(a) >= 4 || degree(b) >= 4) continue;
        if (std::find(m.adjacency[a].begin(), m.adjacency[a].end(), b) != m.adjacency[a].end())
            continue;
        connect(a, b);
    }
    return m;
}

}  // namespace

TEST_SUITE("tetmesh") {

TEST_CASE("build computes symmetric adjacency with positive symmetric weights") {
    auto mesh = make_box(3, 2, 2, 0.05);
    CHECK(mesh.invariant_violations().empty());
    for (int t = 0; t < mesh.num_tets(); ++t) {
        for (size_t k = 0; k < mesh.adjacency[t].size(); ++k) {
            int nb = mesh.adjacency[t][k];
            CHECK(mesh.edge_weights[t][k] > 0.0);
            auto it = std::find(mesh.adjacency[nb].begin(), mesh.adjacency[nb].end(), t);
            REQUIRE(it != mesh.adjacency[nb].end());
            size_t back = it - mesh.adjacency[nb].begin();
            CHECK(mesh.edge_weights[nb][back] == mesh.edge_weights[t][k]);
        }
    }
}

TEST_CASE("two-tet mesh is face adjacent") {
    auto mesh = make_two_tets();
    REQUIRE(mesh.num_tets() == 2);
    CHECK(mesh.adjacency[0] == std::vector<int>{1});
    CHECK(mesh.adjacency[1] == std::vector<int>{0});
}

TEST_CASE("locate_tet: centroid of a single tet") {
    auto mesh = make_single_tet();
    Vec3 c = mesh.rest_centroid(0);
    auto t = locate_tet(mesh, mesh.vertices, c);
    REQUIRE(t.has_value());
    CHECK(*t == 0);
}

TEST_CASE("locate_tet: far point is unlocatable") {
    auto mesh = make_single_tet();
    Vec3 far = mesh.rest_bbox.center() + Vec3(10.0 * mesh.rest_bbox.diagonal(), 0, 0);
    CHECK_FALSE(locate_tet(mesh, mesh.vertices, far).has_value());
}

TEST_CASE("locate_tet: snaps near-surface points within the snap radius") {
    auto mesh = make_box();  // cells of 0.06 m, snap radius ~0.02 m
    // just below the floor face, 0.018 m from the nearest tet centroid
    Vec3 just_outside(0.045, 0.03, -0.003);
    CHECK_FALSE(contains_tet(mesh, mesh.vertices, just_outside).has_value());
    CHECK(locate_tet(mesh, mesh.vertices, just_outside).has_value());
    Vec3 far_outside(0.045, 0.03, -3.0 * mesh.snap_radius);
    CHECK_FALSE(locate_tet(mesh, mesh.vertices, far_outside).has_value());
}

TEST_CASE("locate_tet matches brute-force containment on random interior samples") {
    auto mesh = make_two_tets();
    Rng rng(42);
    int tested = 0;
    for (int i = 0; i < 2000; ++i) {
        Vec3 p(rng.uniform(0, 0.1), rng.uniform(0, 0.1), rng.uniform(0, 0.1));
        bool in0 = oracle_contains(mesh, mesh.vertices, 0, p);
        bool in1 = oracle_contains(mesh, mesh.vertices, 1, p);
        if (!in0 && !in1) continue;
        auto t = contains_tet(mesh, mesh.vertices, p);
        REQUIRE(t.has_value());
        CHECK((*t == 0 ? in0 : in1));
        // lowest-index rule
        if (in0) CHECK(*t == 0);
        ++tested;
    }
    CHECK(tested > 200);
}

TEST_CASE("locate_tet skips degenerate tets") {
    // two tets, the first squashed flat
    std::vector<Vec3> v = {{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}, {0.05, 0.05, 0.0},
                           {0.03, 0.03, 0.1}};
    auto mesh = TetMesh::build(std::move(v), {{0, 1, 2, 3}, {0, 1, 2, 4}});
    Vec3 inside_second = mesh.rest_centroid(1);
    auto t = contains_tet(mesh, mesh.vertices, inside_second);
    REQUIRE(t.has_value());
    CHECK(*t == 1);
}

TEST_CASE("geodesic_table: single tet") {
    auto mesh = make_single_tet();
    auto table = geodesic_table(mesh);
    REQUIRE(table.dist.rows() == 1);
    CHECK(table.dist(0, 0) == 0.0);
}

TEST_CASE("geodesic_table: unit-weight 3-chain") {
    TetMesh mesh;
    mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    mesh.tets.assign(3, {0, 1, 2, 3});
    mesh.adjacency = {{1}, {0, 2}, {1}};
    mesh.edge_weights = {{1.0}, {1.0, 1.0}, {1.0}};
    mesh.component_count = 1;
    auto table = geodesic_table(mesh);
    CHECK(table.dist(0, 2) == 2.0);
    CHECK(table.dist(2, 0) == 2.0);
    CHECK(table.dist(1, 2) == 1.0);
}

TEST_CASE("geodesic_table equals Floyd-Warshall on random graphs") {
    Rng rng(1234);
    for (int trial = 0; trial < 30; ++trial) {
        auto mesh = random_tet_graph(rng, 50);
        auto table = geodesic_table(mesh);
        Eigen::MatrixXd oracle = floyd_warshall(mesh);
        CHECK((table.dist.array() == oracle.array()).all());
    }
}

TEST_CASE("geodesic_table on a disconnected graph names the components") {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
                           {5, 5, 5}, {6, 5, 5}, {5, 6, 5}, {5, 5, 6}};
    auto mesh = TetMesh::build(std::move(v), {{0, 1, 2, 3}, {4, 5, 6, 7}});
    CHECK(mesh.component_count == 2);
    CHECK_THROWS_WITH_AS(geodesic_table(mesh),
                         doctest::Contains("components: {0} {1}"), RuntimeError);
}

TEST_CASE("geodesic: coincident points and face-adjacent tets") {
    auto mesh = make_two_tets();
    auto table = geodesic_table(mesh);
    Vec3 c0 = mesh.rest_centroid(0);
    Vec3 c1 = mesh.rest_centroid(1);
    CHECK(geodesic(mesh, table, mesh.vertices, c0, c0) == 0.0);
    CHECK(geodesic(mesh, table, mesh.vertices, c0, c1) == mesh.edge_weights[0][0]);
}

TEST_CASE("geodesic: unlocatable point throws") {
    auto mesh = make_single_tet();
    auto table = geodesic_table(mesh);
    Vec3 far(10, 10, 10);
    CHECK_THROWS_AS(geodesic(mesh, table, mesh.vertices, mesh.rest_centroid(0), far),
                    RuntimeError);
}

TEST_CASE("geodesic is deformation consistent (bitwise)") {
    auto mesh = make_snake(8);
    auto table = geodesic_table(mesh);
    Vec3 p = mesh.rest_centroid(2), q = mesh.rest_centroid(40);
    double before = geodesic(mesh, table, mesh.vertices, p, q);

    // rigid motion keeps every point in its tet
    Eigen::AngleAxisd rot(0.7, Vec3(0.3, 0.5, 0.8).normalized());
    Vec3 shift(0.4, -0.2, 0.9);
    std::vector<Vec3> moved(mesh.vertices.size());
    for (size_t i = 0; i < moved.size(); ++i) moved[i] = rot * mesh.vertices[i] + shift;
    double after = geodesic(mesh, table, moved, rot * p + shift, rot * q + shift);
    CHECK(before == after);
}

TEST_CASE("geodesic properties: nonnegative, symmetric, triangle inequality") {
    auto mesh = make_box(3, 3, 2, 0.05);
    auto table = geodesic_table(mesh);
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        int a = static_cast<int>(rng.uniform_int(mesh.num_tets()));
        int b = static_cast<int>(rng.uniform_int(mesh.num_tets()));
        int c = static_cast<int>(rng.uniform_int(mesh.num_tets()));
        double ab = table.dist(a, b), ba = table.dist(b, a);
        CHECK(ab >= 0.0);
        CHECK(ab == ba);
        CHECK(table.dist(a, c) <= ab + table.dist(b, c) + 1e-12);
    }
}

TEST_CASE("folded chain: Euclidean-near ends are geodesically far") {
    auto mesh = make_folded_chain();
    auto table = geodesic_table(mesh);
    double diameter = table.diameter();
    REQUIRE(diameter > 0.0);

    // locate once per surface vertex, then scan pairs
    std::vector<int> tet_of(mesh.surface_vertices.size());
    for (size_t i = 0; i < mesh.surface_vertices.size(); ++i)
        tet_of[i] = *locate_tet(mesh, mesh.vertices, mesh.vertices[mesh.surface_vertices[i]]);

    bool found = false;
    for (size_t i = 0; i < mesh.surface_vertices.size() && !found; ++i) {
        for (size_t j = i + 1; j < mesh.surface_vertices.size() && !found; ++j) {
            Vec3 pi = mesh.vertices[mesh.surface_vertices[i]];
            Vec3 pj = mesh.vertices[mesh.surface_vertices[j]];
            double euclid = (pi - pj).norm();
            double geo = table.dist(tet_of[i], tet_of[j]);
            if (euclid < 0.1 * diameter && geo > 0.5 * diameter) found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("mesh JSON round-trip") {
    auto mesh = make_lshape();
    auto dir = std::filesystem::temp_directory_path() / "defo_test_meshio";
    std::filesystem::create_directories(dir);
    auto path = (dir / "lshape.json").string();
    save_mesh(mesh, path);
    auto loaded = load_mesh(path);
    REQUIRE(loaded.num_vertices() == mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v)
        CHECK((loaded.vertices[v] - mesh.vertices[v]).norm() == 0.0);
    CHECK(loaded.tets == mesh.tets);
    CHECK(mesh_content_id(loaded) == mesh_content_id(mesh));
}

TEST_CASE("mesh loader itemizes violations") {
    auto dir = std::filesystem::temp_directory_path() / "defo_test_meshio";
    std::filesystem::create_directories(dir);
    auto path = (dir / "bad.json").string();
    {
        std::ofstream out(path);
        out << R"({"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]],)"
            << R"( "tets": [[0,1,2,9],[0,1,2,2]]})";
    }
    try {
        load_mesh(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE(e.items().size() == 2);
        CHECK(e.items()[0] == "tet 0: vertex index 9 out of range");
        CHECK(e.items()[1] == "tet 1: repeated vertex index");
    }
}

TEST_CASE("mesh loader rejects disconnected objects") {
    auto dir = std::filesystem::temp_directory_path() / "defo_test_meshio";
    std::filesystem::create_directories(dir);
    auto path = (dir / "split.json").string();
    {
        std::ofstream out(path);
        out << R"({"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1],)"
            << R"([5,5,5],[6,5,5],[5,6,5],[5,5,6]],)"
            << R"( "tets": [[0,1,2,3],[4,5,6,7]]})";
    }
    CHECK_THROWS_WITH_AS(load_mesh(path), doctest::Contains("connected components"),
                         ValidationError);
}

TEST_CASE("named shapes build as valid connected objects in the tet budget") {
    for (const auto& name : named_shapes()) {
        auto mesh = make_named_shape(name);
        INFO(name);
        CHECK(mesh.invariant_violations().empty());
        CHECK(mesh.num_tets() >= 90);
        CHECK(mesh.num_tets() <= 400);
    }
    CHECK_THROWS_AS(make_named_shape("dodecahedron"), ValidationError);
}

}  // TEST_SUITE

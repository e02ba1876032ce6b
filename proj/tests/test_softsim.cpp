#include "defo/meshgen.hpp"
#include "defo/softsim.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace defo;
using namespace defo::sim;
using namespace defo::tetmesh;

namespace {

// chi-square critical value, Wilson-Hilferty approximation
double chi2_crit(int dof, double z_alpha) {
    double a = 2.0 / (9.0 * dof);
    double c = 1.0 - a + z_alpha * std::sqrt(a);
    return dof * c * c * c;
}

Vec3 com(const std::vector<Vec3>& pts) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : pts) c += p;
    return c / static_cast<double>(pts.size());
}

int top_vertex(const TetMesh& mesh, const std::vector<Vec3>& pos) {
    int best = mesh.surface_vertices.front();
    for (int v : mesh.surface_vertices)
        if (pos[v].z() > pos[best].z()) best = v;
    return best;
}

}  // namespace

TEST_SUITE("softsim") {

TEST_CASE("initial state is settled, asleep, and penetration free") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    CHECK(s.asleep);
    CHECK(s.invariant_violations(mesh, sim.config()).empty());
    for (const auto& v : s.velocities) CHECK(v.norm() == 0.0);
}

TEST_CASE("body at rest on the floor stays put for a second of steps") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s0 = sim.initial_state();
    auto s = s0;
    for (int i = 0; i < 150; ++i) s = sim.step(s);
    double drift = 0.0;
    for (size_t v = 0; v < s.positions.size(); ++v)
        drift = std::max(drift, (s.positions[v] - s0.positions[v]).norm());
    CHECK(drift < 1e-6);

    // forced awake, the equilibrium breathes but must stay bounded
    s = s0;
    s.asleep = false;
    for (int i = 0; i < 300; ++i) s = sim.step(s);
    drift = 0.0;
    for (size_t v = 0; v < s.positions.size(); ++v)
        drift = std::max(drift, (s.positions[v] - s0.positions[v]).norm());
    CHECK(drift < 1e-3);
}

TEST_CASE("free fall follows the integrator convention for one step") {
    auto mesh = make_single_tet();
    Simulator sim(mesh);
    SceneState s;
    s.positions = mesh.vertices;
    for (auto& p : s.positions) p.z() += 1.0;
    s.velocities.assign(4, Vec3::Zero());
    auto s1 = sim.step(s);
    const auto& c = sim.config();
    double expected_dz = c.dt * ((c.dt * c.gravity.z()) * c.damping);
    for (int v = 0; v < 4; ++v) {
        CHECK(s1.positions[v].z() - s.positions[v].z() ==
              doctest::Approx(expected_dz).epsilon(1e-9));
        // constraint projection sees an unchanged shape up to roundoff
        CHECK(std::abs(s1.positions[v].x() - s.positions[v].x()) < 1e-12);
        CHECK(std::abs(s1.positions[v].y() - s.positions[v].y()) < 1e-12);
    }
}

TEST_CASE("pinned vertex tracks the gripper exactly") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    int v = top_vertex(mesh, s.positions);
    Gripper grip;
    grip.held = {v};
    grip.offsets = {Vec3::Zero()};
    grip.position = s.positions[v];
    s.gripper = grip;
    for (int i = 0; i < 20; ++i) {
        s.gripper->position += Vec3(0.0008, 0.0004, 0.0012);
        s = sim.step(s);
        CHECK((s.positions[v] - s.gripper->position).norm() == 0.0);
    }
}

TEST_CASE("divergent positions are reported with the vertex index") {
    auto mesh = make_single_tet();
    Simulator sim(mesh);
    SceneState s;
    s.positions = mesh.vertices;
    s.positions[2].x() = std::numeric_limits<double>::quiet_NaN();
    s.velocities.assign(4, Vec3::Zero());
    CHECK_THROWS_WITH_AS(sim.step(s), doctest::Contains("vertex 2"), RuntimeError);
}

TEST_CASE("settle respects the simulated-time cap") {
    auto mesh = make_snake(6);
    SimConfig cfg;
    cfg.damping = 1.0;  // never dissipate
    cfg.sleep_threshold = 0.0;
    cfg.settle_threshold = 0.0;
    Simulator sim(mesh, cfg);
    SceneState s;
    s.positions = mesh.vertices;
    for (auto& p : s.positions) p.z() += 0.5;
    s.velocities.assign(s.positions.size(), Vec3::Zero());
    auto settled = sim.settle(s);
    CHECK(settled.time <= s.time + cfg.settle_cap + cfg.dt);
    CHECK(settled.time >= s.time + cfg.settle_cap - cfg.dt);
}

TEST_CASE("null action produces flow below the settle tolerance") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    int v = top_vertex(mesh, s.positions);
    Action a{s.positions[v], s.positions[v]};
    auto r = sim.execute(s, a);
    CHECK_FALSE(r.missed);
    for (const auto& f : r.flow) CHECK(f.norm() <= sim.config().settle_threshold);
}

TEST_CASE("grasp out of reach is a flagged no-op") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    Action a{Vec3(5, 5, 5), Vec3(5, 5, 6)};
    auto r = sim.execute(s, a);
    CHECK(r.missed);
    for (const auto& f : r.flow) CHECK(f.norm() == 0.0);
    for (size_t v = 0; v < s.positions.size(); ++v)
        CHECK((r.post.positions[v] - s.positions[v]).norm() == 0.0);
}

TEST_CASE("flow equals post minus pre bitwise") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    int v = top_vertex(mesh, s.positions);
    Action a{s.positions[v], s.positions[v] + Vec3(0.05, 0.02, 0.06)};
    auto r = sim.execute(s, a);
    CHECK_FALSE(r.missed);
    for (size_t i = 0; i < s.positions.size(); ++i)
        CHECK(((r.post.positions[i] - s.positions[i]) - r.flow[i]).norm() == 0.0);
}

TEST_CASE("rigid drag: every vertex pinned moves by the commanded offset") {
    auto mesh = make_box();
    SimConfig cfg;
    cfg.grasp_radius = 10.0;
    cfg.grasp_k = mesh.num_vertices();
    Simulator sim(mesh, cfg);
    auto s = sim.initial_state();
    int v = top_vertex(mesh, s.positions);
    Vec3 offset(0.1, 0.0, 0.0);
    Action a{s.positions[v], s.positions[v] + offset};
    auto r = sim.execute(s, a);
    REQUIRE_FALSE(r.missed);
    for (const auto& f : r.flow) CHECK((f - offset).norm() < 1e-9);
}

TEST_CASE("lift, release, and settle returns the body to its rest height") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    double rest_com_z = com(s.positions).z();
    int v = top_vertex(mesh, s.positions);
    Action a{s.positions[v], s.positions[v] + Vec3(0.0, 0.0, 0.04)};
    auto r = sim.execute(s, a);
    REQUIRE_FALSE(r.missed);
    CHECK(r.post.invariant_violations(mesh, sim.config()).empty());
    CHECK(std::abs(com(r.post.positions).z() - rest_com_z) <= sim.config().contact_tol);
}

TEST_CASE("dragging into an obstacle leaves no deep penetration after settle") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    Aabb wall;
    wall.lo = Vec3(0.33, -0.1, 0.0);
    wall.hi = Vec3(0.43, 0.35, 0.2);
    s.obstacles.push_back(wall);
    int v = top_vertex(mesh, s.positions);
    Action a{s.positions[v], s.positions[v] + Vec3(0.25, 0.0, 0.0)};
    auto r = sim.execute(s, a);
    REQUIRE_FALSE(r.missed);
    CHECK(r.post.invariant_violations(mesh, sim.config()).empty());
}

TEST_CASE("top view keeps exactly the top-face vertices of a box") {
    auto mesh = make_box();  // flat top at z = 0.12
    Simulator sim(mesh);
    SceneState s;
    s.positions = mesh.vertices;
    s.velocities.assign(s.positions.size(), Vec3::Zero());
    auto obs = sim.observe(s, Camera{Vec3(0, 0, -1), 64});
    double top_z = 0.0;
    for (int v : mesh.surface_vertices) top_z = std::max(top_z, mesh.vertices[v].z());
    int n_top = 0;
    for (int v : mesh.surface_vertices)
        if (mesh.vertices[v].z() == top_z) ++n_top;
    CHECK(static_cast<int>(obs.points.size()) == n_top);
    for (size_t i = 0; i < obs.points.size(); ++i) {
        CHECK(obs.points[i].z() == top_z);
        CHECK((obs.points[i] - s.positions[obs.ids[i]]).norm() == 0.0);
    }
}

TEST_CASE("one view of a convex body misses at least the far side") {
    auto mesh = make_box(4, 4, 4, 0.06);
    Simulator sim(mesh);
    SceneState s;
    s.positions = mesh.vertices;
    s.velocities.assign(s.positions.size(), Vec3::Zero());
    auto obs = sim.observe(s, Camera{Vec3(0, 0, -1), 64});
    double fraction = static_cast<double>(obs.points.size()) / mesh.surface_vertices.size();
    CHECK(fraction <= 0.55);
}

TEST_CASE("two opposing diagonal views cover nearly the whole surface") {
    auto mesh = make_box(4, 4, 4, 0.06);
    Simulator sim(mesh);
    SceneState s;
    s.positions = mesh.vertices;
    s.velocities.assign(s.positions.size(), Vec3::Zero());
    auto a = sim.observe(s, Camera{Vec3(1, 1, -1), 64});
    auto b = sim.observe(s, Camera{Vec3(-1, -1, 1), 64});
    std::set<int> seen(a.ids.begin(), a.ids.end());
    seen.insert(b.ids.begin(), b.ids.end());
    double fraction = static_cast<double>(seen.size()) / mesh.surface_vertices.size();
    CHECK(fraction >= 0.9);
}

TEST_CASE("sampled actions are deterministic in the seed") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    auto obs = sim.observe(s, Camera{});
    Rng r1(77), r2(77);
    auto a1 = sim.sample_action(obs, r1);
    auto a2 = sim.sample_action(obs, r2);
    CHECK((a1.p_g - a2.p_g).norm() == 0.0);
    CHECK((a1.p_r - a2.p_r).norm() == 0.0);
}

TEST_CASE("sampling from an empty observation is an error") {
    auto mesh = make_box();
    Simulator sim(mesh);
    Rng rng(1);
    CHECK_THROWS_AS(sim.sample_action(PartialObservation{}, rng), ValidationError);
}

TEST_CASE("grasp points are uniform over visible points (chi-square at 0.01)") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    auto obs = sim.observe(s, Camera{});
    const int n = 10000;
    std::map<int, int> counts;
    Rng rng(2024);
    for (int i = 0; i < n; ++i) {
        auto a = sim.sample_action(obs, rng);
        int hit = -1;
        for (size_t k = 0; k < obs.points.size(); ++k)
            if ((obs.points[k] - a.p_g).norm() == 0.0) {
                hit = static_cast<int>(k);
                break;
            }
        REQUIRE(hit >= 0);
        counts[hit]++;
    }
    double expected = static_cast<double>(n) / obs.points.size();
    double chi2 = 0.0;
    for (size_t k = 0; k < obs.points.size(); ++k) {
        double o = counts.count(static_cast<int>(k)) ? counts[static_cast<int>(k)] : 0.0;
        chi2 += (o - expected) * (o - expected) / expected;
    }
    CHECK(chi2 < chi2_crit(static_cast<int>(obs.points.size()) - 1, 2.3263479));
}

TEST_CASE("sampled displacement radius matches the configured mean within 5%") {
    auto mesh = make_box();
    Simulator sim(mesh);
    auto s = sim.initial_state();
    auto obs = sim.observe(s, Camera{});
    Rng rng(555);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto a = sim.sample_action(obs, rng);
        sum += (a.p_r - a.p_g).norm();
    }
    double mean = sum / n;
    CHECK(std::abs(mean - sim.config().action.r_mean) < 0.05 * sim.config().action.r_mean);
}

TEST_CASE("simulate is bitwise deterministic and round-trips through JSONL") {
    auto mesh = make_lshape();
    Simulator sim(mesh);
    auto t1 = sim.simulate(5, 99, 2);
    auto t2 = sim.simulate(5, 99, 2);
    REQUIRE(t1.records.size() == 5);
    CHECK(t1.records[2].reset);
    CHECK(t1.records[4].reset);
    CHECK_FALSE(t1.records[1].reset);
    for (size_t i = 0; i < 5; ++i)
        for (size_t v = 0; v < t1.records[i].post.size(); ++v)
            CHECK((t1.records[i].post[v] - t2.records[i].post[v]).norm() == 0.0);

    auto dir = std::filesystem::temp_directory_path() / "defo_test_traj";
    std::filesystem::create_directories(dir);
    auto p1 = (dir / "a.jsonl").string(), p2 = (dir / "b.jsonl").string();
    save_trajectory(t1, p1);
    auto loaded = load_trajectory(p1);
    CHECK(loaded.mesh_id == t1.mesh_id);
    CHECK(loaded.seed == t1.seed);
    CHECK(loaded.config_hash == t1.config_hash);
    save_trajectory(loaded, p2);
    std::ifstream f1(p1), f2(p2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK_FALSE(s1.empty());
}

TEST_CASE("trajectory loader itemizes malformed records") {
    auto dir = std::filesystem::temp_directory_path() / "defo_test_traj";
    std::filesystem::create_directories(dir);
    auto path = (dir / "bad.jsonl").string();
    {
        std::ofstream out(path);
        out << R"({"record":0,"seed":1,"config":"x"})" << "\n";
    }
    try {
        load_trajectory(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE_FALSE(e.items().empty());
        CHECK(e.items()[0] == "line 1: missing field mesh");
    }
}

TEST_CASE("config hash changes with any field") {
    SimConfig a, b;
    CHECK(a.hash() == b.hash());
    b.grasp_k = 9;
    CHECK(a.hash() != b.hash());
    SimConfig c;
    c.action.r_mean = 0.25;
    CHECK(a.hash() != c.hash());
}

}  // TEST_SUITE

#include "defo/softsim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace defo::sim {

using json = nlohmann::json;
using tetmesh::mesh_content_id;

std::string SimConfig::hash() const {
    ConfigHasher h;
    h.add("dt", dt);
    h.add("gravity_z", gravity.z());
    h.add("damping", damping);
    h.add("iterations", iterations);
    h.add("edge_stiffness", edge_stiffness);
    h.add("volume_stiffness", volume_stiffness);
    h.add("floor_z", floor_z);
    h.add("contact_tol", contact_tol);
    h.add("grasp_radius", grasp_radius);
    h.add("grasp_k", grasp_k);
    h.add("gripper_speed", gripper_speed);
    h.add("settle_threshold", settle_threshold);
    h.add("settle_cap", settle_cap);
    h.add("sleep_threshold", sleep_threshold);
    h.add("r_mean", action.r_mean);
    h.add("r_std", action.r_std);
    h.add("theta_mean", action.theta_mean);
    h.add("theta_std", action.theta_std);
    return h.hex();
}

std::vector<std::string> SceneState::invariant_violations(const TetMesh& mesh,
                                                          const SimConfig& config) const {
    std::vector<std::string> out;
    const size_t nv = mesh.vertices.size();
    if (positions.size() != nv) out.push_back("positions size mismatch");
    if (velocities.size() != nv) out.push_back("velocities size mismatch");
    if (gripper && gripper->held.empty()) out.push_back("gripper engaged with empty held set");
    for (size_t v = 0; v < positions.size(); ++v) {
        const Vec3& p = positions[v];
        if (!p.allFinite()) {
            out.push_back("vertex " + std::to_string(v) + ": non-finite position");
            continue;
        }
        if (p.z() < config.floor_z - config.contact_tol)
            out.push_back("vertex " + std::to_string(v) + ": below floor beyond contact tolerance");
        for (size_t o = 0; o < obstacles.size(); ++o) {
            const Aabb& box = obstacles[o];
            double tol = config.contact_tol;
            if (p.x() > box.lo.x() + tol && p.x() < box.hi.x() - tol &&
                p.y() > box.lo.y() + tol && p.y() < box.hi.y() - tol &&
                p.z() > box.lo.z() + tol && p.z() < box.hi.z() - tol)
                out.push_back("vertex " + std::to_string(v) + ": inside obstacle " +
                              std::to_string(o) + " beyond contact tolerance");
        }
    }
    return out;
}

namespace {

double max_speed(const SceneState& s) {
    double m = 0.0;
    for (const auto& v : s.velocities) m = std::max(m, v.norm());
    return m;
}

double tet_signed_volume(const std::vector<Vec3>& p, const std::array<int, 4>& t) {
    return (p[t[1]] - p[t[0]]).cross(p[t[2]] - p[t[0]]).dot(p[t[3]] - p[t[0]]) / 6.0;
}

}  // namespace

Simulator::Simulator(const TetMesh& mesh, SimConfig config)
    : mesh_(mesh), config_(std::move(config)) {
    if (!(config_.dt > 0.0)) throw ValidationError("sim config: dt must be positive");
    std::set<std::pair<int, int>> seen;
    static constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (const auto& tet : mesh_.tets) {
        for (const auto& pr : kPairs) {
            int a = tet[pr[0]], b = tet[pr[1]];
            if (a > b) std::swap(a, b);
            if (seen.insert({a, b}).second) {
                edges_.emplace_back(a, b);
                rest_lengths_.push_back((mesh_.vertices[a] - mesh_.vertices[b]).norm());
            }
        }
    }
    rest_volumes_.reserve(mesh_.tets.size());
    for (const auto& tet : mesh_.tets)
        rest_volumes_.push_back(tet_signed_volume(mesh_.vertices, tet));
}

SceneState Simulator::initial_state() const {
    SceneState s;
    s.positions = mesh_.vertices;
    double min_z = std::numeric_limits<double>::infinity();
    for (const auto& p : s.positions) min_z = std::min(min_z, p.z());
    for (auto& p : s.positions) p.z() += config_.floor_z - min_z;
    s.velocities.assign(s.positions.size(), Vec3::Zero());
    return settle(std::move(s));
}

SceneState Simulator::step(const SceneState& state) const {
    SceneState s = state;
    if (s.asleep && !s.gripper) {
        s.time += config_.dt;
        return s;
    }

    const int nv = static_cast<int>(s.positions.size());
    for (int v = 0; v < nv; ++v)
        if (!s.positions[v].allFinite())
            throw RuntimeError("simulation diverged at vertex " + std::to_string(v) +
                               ", time " + std::to_string(s.time));
    std::vector<double> w(nv, 1.0);  // inverse masses; 0 pins a vertex
    if (s.gripper)
        for (int v : s.gripper->held) w[v] = 0.0;

    std::vector<Vec3> pred(nv);
    for (int v = 0; v < nv; ++v) {
        if (w[v] == 0.0) continue;
        s.velocities[v] = (s.velocities[v] + config_.dt * config_.gravity) * config_.damping;
        pred[v] = s.positions[v] + config_.dt * s.velocities[v];
    }
    if (s.gripper)
        for (size_t k = 0; k < s.gripper->held.size(); ++k)
            pred[s.gripper->held[k]] = s.gripper->position + s.gripper->offsets[k];

    for (int it = 0; it < config_.iterations; ++it) {
        for (size_t e = 0; e < edges_.size(); ++e) {
            auto [a, b] = edges_[e];
            double wsum = w[a] + w[b];
            if (wsum == 0.0) continue;
            Vec3 d = pred[a] - pred[b];
            double len = d.norm();
            if (len < 1e-12) continue;
            Vec3 corr = (config_.edge_stiffness * (len - rest_lengths_[e]) / (len * wsum)) * d;
            pred[a] -= w[a] * corr;
            pred[b] += w[b] * corr;
        }
        for (size_t t = 0; t < mesh_.tets.size(); ++t) {
            const auto& tet = mesh_.tets[t];
            // gradients of 6*signed_volume with respect to each corner
            Vec3 g1 = (pred[tet[3]] - pred[tet[1]]).cross(pred[tet[2]] - pred[tet[1]]);
            Vec3 g2 = (pred[tet[2]] - pred[tet[0]]).cross(pred[tet[3]] - pred[tet[0]]);
            Vec3 g3 = (pred[tet[3]] - pred[tet[0]]).cross(pred[tet[1]] - pred[tet[0]]);
            Vec3 g4 = (pred[tet[1]] - pred[tet[0]]).cross(pred[tet[2]] - pred[tet[0]]);
            double denom = w[tet[0]] * g1.squaredNorm() + w[tet[1]] * g2.squaredNorm() +
                           w[tet[2]] * g3.squaredNorm() + w[tet[3]] * g4.squaredNorm();
            if (denom < 1e-20) continue;
            double c = 6.0 * (tet_signed_volume(pred, tet) - rest_volumes_[t]);
            double scale = config_.volume_stiffness * c / denom;
            pred[tet[0]] -= scale * w[tet[0]] * g1;
            pred[tet[1]] -= scale * w[tet[1]] * g2;
            pred[tet[2]] -= scale * w[tet[2]] * g3;
            pred[tet[3]] -= scale * w[tet[3]] * g4;
        }
        for (int v = 0; v < nv; ++v) {
            if (w[v] == 0.0) continue;
            if (pred[v].z() < config_.floor_z) pred[v].z() = config_.floor_z;
            for (const Aabb& box : s.obstacles) {
                Vec3& p = pred[v];
                if (p.x() <= box.lo.x() || p.x() >= box.hi.x() || p.y() <= box.lo.y() ||
                    p.y() >= box.hi.y() || p.z() <= box.lo.z() || p.z() >= box.hi.z())
                    continue;
                // push out along the axis of least penetration
                double moves[6] = {p.x() - box.lo.x(), box.hi.x() - p.x(),
                                   p.y() - box.lo.y(), box.hi.y() - p.y(),
                                   p.z() - box.lo.z(), box.hi.z() - p.z()};
                int best = 0;
                for (int f = 1; f < 6; ++f)
                    if (moves[f] < moves[best]) best = f;
                switch (best) {
                    case 0: p.x() = box.lo.x(); break;
                    case 1: p.x() = box.hi.x(); break;
                    case 2: p.y() = box.lo.y(); break;
                    case 3: p.y() = box.hi.y(); break;
                    case 4: p.z() = box.lo.z(); break;
                    case 5: p.z() = box.hi.z(); break;
                }
            }
        }
    }

    for (int v = 0; v < nv; ++v) {
        if (!pred[v].allFinite())
            throw RuntimeError("simulation diverged at vertex " + std::to_string(v) +
                               ", time " + std::to_string(s.time));
        s.velocities[v] = (pred[v] - s.positions[v]) / config_.dt;
        s.positions[v] = pred[v];
    }
    s.time += config_.dt;
    if (!s.gripper && max_speed(s) < config_.sleep_threshold) {
        for (auto& v : s.velocities) v.setZero();
        s.asleep = true;
    } else {
        s.asleep = false;
    }
    return s;
}

SceneState Simulator::settle(SceneState state) const {
    double t_end = state.time + config_.settle_cap;
    while (max_speed(state) >= config_.settle_threshold && state.time < t_end)
        state = step(state);
    if (!state.gripper && max_speed(state) < config_.sleep_threshold) {
        for (auto& v : state.velocities) v.setZero();
        state.asleep = true;
    }
    return state;
}

ExecResult Simulator::execute(const SceneState& state, const Action& action) const {
    ExecResult out;
    if (!action.p_g.allFinite() || !action.p_r.allFinite())
        throw ValidationError("action: non-finite grasp or release point");

    // pin up to grasp_k nearest surface vertices within the grasp radius
    std::vector<std::pair<double, int>> near;
    for (int v : mesh_.surface_vertices) {
        double d = (state.positions[v] - action.p_g).norm();
        if (d <= config_.grasp_radius) near.emplace_back(d, v);
    }
    if (near.empty()) {
        out.post = state;
        out.flow.assign(state.positions.size(), Vec3::Zero());
        out.missed = true;
        return out;
    }
    std::sort(near.begin(), near.end());
    if (static_cast<int>(near.size()) > config_.grasp_k) near.resize(config_.grasp_k);

    SceneState s = state;
    Gripper grip;
    grip.position = action.p_g;
    for (const auto& [d, v] : near) {
        grip.held.push_back(v);
        grip.offsets.push_back(s.positions[v] - action.p_g);
    }
    s.gripper = grip;
    s.asleep = false;

    // the arm will not push the gripper below the table
    Vec3 target = action.p_r;
    target.z() = std::max(target.z(), config_.floor_z + config_.contact_tol);

    const double step_len = config_.gripper_speed * config_.dt;
    bool moved = false;
    while ((target - s.gripper->position).norm() > 1e-15) {
        Vec3 delta = target - s.gripper->position;
        double dist = delta.norm();
        if (dist <= step_len)
            s.gripper->position = target;
        else
            s.gripper->position += (step_len / dist) * delta;
        s = step(s);
        moved = true;
    }
    // the arm halts before letting go, so held vertices release at rest
    if (moved) s = step(s);

    s.gripper.reset();
    s = settle(std::move(s));

    out.flow.resize(s.positions.size());
    for (size_t v = 0; v < s.positions.size(); ++v)
        out.flow[v] = s.positions[v] - state.positions[v];
    out.post = std::move(s);
    return out;
}

PartialObservation Simulator::observe(const SceneState& state, const Camera& camera) const {
    PartialObservation obs;
    obs.camera = camera;
    obs.camera.dir = camera.dir.normalized();
    const Vec3& dir = obs.camera.dir;
    const int res = camera.res;
    if (res <= 0) throw ValidationError("camera: resolution must be positive");

    Vec3 ref = std::abs(dir.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    Vec3 u = dir.cross(ref).normalized();
    Vec3 v = dir.cross(u).normalized();

    double smin = std::numeric_limits<double>::infinity(), smax = -smin;
    double tmin = smin, tmax = -smin;
    for (int vid : mesh_.surface_vertices) {
        const Vec3& p = state.positions[vid];
        smin = std::min(smin, u.dot(p)), smax = std::max(smax, u.dot(p));
        tmin = std::min(tmin, v.dot(p)), tmax = std::max(tmax, v.dot(p));
    }
    double sspan = std::max(smax - smin, 1e-12), tspan = std::max(tmax - tmin, 1e-12);

    // z-buffer: (depth, vertex id) per pixel; earlier (lower) ids win ties
    std::vector<std::pair<double, int>> buffer(static_cast<size_t>(res) * res,
                                               {std::numeric_limits<double>::infinity(), -1});
    for (int vid : mesh_.surface_vertices) {
        const Vec3& p = state.positions[vid];
        int px = std::min(res - 1, static_cast<int>((u.dot(p) - smin) / sspan * res));
        int py = std::min(res - 1, static_cast<int>((v.dot(p) - tmin) / tspan * res));
        auto& cell = buffer[static_cast<size_t>(py) * res + px];
        double depth = dir.dot(p);
        if (depth < cell.first) cell = {depth, vid};
    }
    std::vector<int> ids;
    for (const auto& [depth, vid] : buffer)
        if (vid >= 0) ids.push_back(vid);
    std::sort(ids.begin(), ids.end());
    for (int vid : ids) {
        obs.ids.push_back(vid);
        obs.points.push_back(state.positions[vid]);
    }
    return obs;
}

Action Simulator::sample_action(const PartialObservation& observation, Rng& rng) const {
    if (observation.empty()) throw ValidationError("cannot sample an action: empty observation");
    Action a;
    a.p_g = observation.points[rng.uniform_int(observation.points.size())];
    const ActionDistribution& d = config_.action;
    double r = rng.normal(d.r_mean, d.r_std);
    while (r <= 0.0) r = rng.normal(d.r_mean, d.r_std);
    double theta = rng.normal(d.theta_mean, d.theta_std);
    double phi = 2.0 * M_PI * (1.0 - rng.uniform());  // (0, 2pi]
    Vec3 dir(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
    a.p_r = a.p_g + r * dir;
    return a;
}

SceneState Simulator::randomized_scene(Rng& rng) const {
    SceneState s;
    s.positions = mesh_.vertices;
    Vec3 center = mesh_.rest_bbox.center();
    double yaw = rng.uniform(0.0, 2.0 * M_PI);
    Eigen::AngleAxisd rot(yaw, Vec3::UnitZ());
    Vec3 shift(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.0);
    for (auto& p : s.positions) p = rot * (p - center) + center + shift;
    double min_z = std::numeric_limits<double>::infinity();
    for (const auto& p : s.positions) min_z = std::min(min_z, p.z());
    for (auto& p : s.positions) p.z() += config_.floor_z - min_z;
    s.velocities.assign(s.positions.size(), Vec3::Zero());

    Aabb body = Aabb::of(s.positions);
    int n_obstacles = static_cast<int>(rng.uniform_int(3));
    for (int o = 0; o < n_obstacles; ++o) {
        Vec3 size(rng.uniform(0.04, 0.1), rng.uniform(0.04, 0.1), rng.uniform(0.04, 0.1));
        double angle = rng.uniform(0.0, 2.0 * M_PI);
        double reach = 0.5 * (body.hi - body.lo).head<2>().norm() + size.head<2>().norm() +
                       rng.uniform(0.02, 0.1);
        Vec3 at = body.center() + reach * Vec3(std::cos(angle), std::sin(angle), 0.0);
        Aabb box;
        box.lo = Vec3(at.x() - 0.5 * size.x(), at.y() - 0.5 * size.y(), config_.floor_z);
        box.hi = box.lo + size;
        s.obstacles.push_back(box);
    }
    return settle(std::move(s));
}

Trajectory Simulator::simulate(int actions, uint64_t seed, int reset_period) const {
    if (actions < 0) throw ValidationError("simulate: action count must be nonnegative");
    if (reset_period <= 0) throw ValidationError("simulate: reset period must be positive");
    Trajectory traj;
    traj.mesh_id = mesh_content_id(mesh_);
    traj.seed = seed;
    traj.config_hash = config_.hash();

    Rng rng(seed);
    SceneState state = randomized_scene(rng);
    for (int i = 0; i < actions; ++i) {
        bool reset = i > 0 && i % reset_period == 0;
        if (reset) state = randomized_scene(rng);
        ActionRecord rec;
        rec.reset = reset;
        rec.observation = observe(state, Camera{});
        rec.action = sample_action(rec.observation, rng);
        ExecResult exec = execute(state, rec.action);
        rec.missed = exec.missed;
        rec.pre = state.positions;
        rec.post = exec.post.positions;
        rec.flow = std::move(exec.flow);
        traj.records.push_back(std::move(rec));
        state = std::move(exec.post);
    }
    return traj;
}

namespace {

json jvec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json jpoints(const std::vector<Vec3>& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back(jvec(p));
    return a;
}

Vec3 pvec(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number())
        throw ValidationError(what + ": expected [x,y,z]");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

std::vector<Vec3> ppoints(const json& j, const std::string& what) {
    if (!j.is_array()) throw ValidationError(what + ": expected an array of points");
    std::vector<Vec3> out;
    out.reserve(j.size());
    for (size_t i = 0; i < j.size(); ++i) out.push_back(pvec(j[i], what + "[" + std::to_string(i) + "]"));
    return out;
}

}  // namespace

void save_trajectory(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write trajectory file: " + path);
    for (size_t i = 0; i < traj.records.size(); ++i) {
        const ActionRecord& r = traj.records[i];
        json j;
        j["version"] = kToolVersion;
        j["record"] = i;
        j["mesh"] = traj.mesh_id;
        j["seed"] = traj.seed;
        j["config"] = traj.config_hash;
        j["reset"] = r.reset;
        j["missed"] = r.missed;
        j["action"] = {{"p_g", jvec(r.action.p_g)}, {"p_r", jvec(r.action.p_r)}};
        j["pre"] = jpoints(r.pre);
        j["post"] = jpoints(r.post);
        j["flow"] = jpoints(r.flow);
        j["observation"] = {{"camera", {{"dir", jvec(r.observation.camera.dir)},
                                        {"res", r.observation.camera.res}}},
                            {"points", jpoints(r.observation.points)},
                            {"ids", r.observation.ids}};
        out << j.dump() << "\n";
    }
}

Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open trajectory file: " + path);
    Trajectory traj;
    std::string line;
    size_t lineno = 0;
    std::vector<std::string> bad;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("trajectory " + path + " line " + std::to_string(lineno) +
                                  ": invalid JSON: " + e.what());
        }
        const std::string at = "line " + std::to_string(lineno);
        for (const char* field : {"mesh", "seed", "config", "action", "pre", "post", "flow",
                                  "observation"})
            if (!j.contains(field)) bad.push_back(at + ": missing field " + field);
        if (!bad.empty()) continue;

        if (traj.records.empty()) {
            traj.mesh_id = j["mesh"].get<std::string>();
            traj.seed = j["seed"].get<uint64_t>();
            traj.config_hash = j["config"].get<std::string>();
        }
        ActionRecord r;
        r.reset = j.value("reset", false);
        r.missed = j.value("missed", false);
        r.action.p_g = pvec(j["action"]["p_g"], at + ": action.p_g");
        r.action.p_r = pvec(j["action"]["p_r"], at + ": action.p_r");
        r.pre = ppoints(j["pre"], at + ": pre");
        r.post = ppoints(j["post"], at + ": post");
        r.flow = ppoints(j["flow"], at + ": flow");
        const json& obs = j["observation"];
        r.observation.camera.dir = pvec(obs["camera"]["dir"], at + ": camera.dir");
        r.observation.camera.res = obs["camera"]["res"].get<int>();
        r.observation.points = ppoints(obs["points"], at + ": observation.points");
        r.observation.ids = obs["ids"].get<std::vector<int>>();

        if (r.pre.size() != r.post.size() || r.pre.size() != r.flow.size())
            bad.push_back(at + ": pre/post/flow size mismatch");
        else
            for (size_t v = 0; v < r.pre.size(); ++v)
                if ((r.post[v] - r.pre[v] - r.flow[v]).norm() != 0.0) {
                    bad.push_back(at + ": flow is not post minus pre at vertex " +
                                  std::to_string(v));
                    break;
                }
        if (r.observation.points.size() != r.observation.ids.size())
            bad.push_back(at + ": observation points/ids size mismatch");
        traj.records.push_back(std::move(r));
    }
    if (!bad.empty()) throw ValidationError("trajectory file " + path, bad);
    if (traj.records.empty()) throw ValidationError("trajectory file " + path + ": no records");
    return traj;
}

}  // namespace defo::sim

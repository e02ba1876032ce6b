#pragma once

#include "defo/tetmesh.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace defo::sim {

using tetmesh::TetMesh;

/// Spherical-coordinate displacement distribution for sampled actions:
/// radius ~ N(r_mean, r_std) (resampled until positive), polar angle from +z
/// ~ N(theta_mean, theta_std), azimuth uniform on (0, 2pi].
struct ActionDistribution {
    double r_mean = 0.24;           // meters, desk scale
    double r_std = 0.08;
    double theta_mean = M_PI / 4.0;
    double theta_std = M_PI / 6.0;
};

struct SimConfig {
    double dt = 1.0 / 150.0;        // seconds per step
    Vec3 gravity = Vec3(0.0, 0.0, -9.81);
    double damping = 0.98;          // velocity factor per step
    int iterations = 10;            // constraint projection passes per step
    double edge_stiffness = 1.0;    // fraction of edge correction applied
    double volume_stiffness = 1.0;  // fraction of volume correction applied
    double floor_z = 0.0;
    double contact_tol = 1e-3;      // meters
    double grasp_radius = 0.03;     // meters
    int grasp_k = 8;                // vertices pinned per grasp
    double gripper_speed = 0.5;     // m/s
    double settle_threshold = 1e-4; // m/s, settle ends below this speed
    double settle_cap = 2.0;        // seconds of simulated settle at most
    double sleep_threshold = 1e-3;  // m/s, velocities snapped to zero below
    ActionDistribution action;

    /// Hash of every field, recorded in trajectory files.
    std::string hash() const;
};

/// Kinematic gripper: vertex indices rigidly pinned at fixed offsets from the
/// gripper position.
struct Gripper {
    std::vector<int> held;
    std::vector<Vec3> offsets;  // parallel to held
    Vec3 position = Vec3::Zero();
};

struct SceneState {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    std::optional<Gripper> gripper;
    std::vector<Aabb> obstacles;
    double time = 0.0;   // seconds
    bool asleep = false; // velocities zeroed, body frozen until next grasp

    /// One item per violated state invariant (sizes, finiteness, floor and
    /// obstacle penetration beyond the contact tolerance, empty held set).
    std::vector<std::string> invariant_violations(const TetMesh& mesh,
                                                  const SimConfig& config) const;
};

/// Grasp point and gripper target, both in world meters.
struct Action {
    Vec3 p_g = Vec3::Zero();
    Vec3 p_r = Vec3::Zero();
};

/// Orthographic camera: unit view direction (from camera toward the scene)
/// and z-buffer resolution (res x res pixels over the object footprint).
struct Camera {
    Vec3 dir = Vec3(1.0, 1.0, -1.0).normalized();
    int res = 64;
};

/// Frontmost surface points per pixel, with their source vertex ids (the
/// ground-truth correspondence labels). Points are sorted by vertex id.
struct PartialObservation {
    std::vector<Vec3> points;
    std::vector<int> ids;  // parallel to points
    Camera camera;

    bool empty() const { return points.empty(); }
};

/// One executed action: states before and after, the exact per-vertex flow
/// (post minus pre positions), and the observation the action was sampled
/// from. `reset` marks records that start a fresh randomized scene.
struct ActionRecord {
    Action action;
    bool missed = false;
    bool reset = false;
    std::vector<Vec3> pre;
    std::vector<Vec3> post;
    std::vector<Vec3> flow;
    PartialObservation observation;
};

struct Trajectory {
    std::string mesh_id;
    uint64_t seed = 0;
    std::string config_hash;
    std::vector<ActionRecord> records;
};

struct ExecResult {
    SceneState post;
    std::vector<Vec3> flow;
    bool missed = false;
};

/// Position-based soft-body simulator over a tet mesh: semi-implicit gravity
/// step, edge-length and tet-volume constraint projection, floor and
/// axis-aligned obstacle contacts, kinematic grasp-move-release actions.
class Simulator {
public:
    explicit Simulator(const TetMesh& mesh, SimConfig config = {});

    const TetMesh& mesh() const { return mesh_; }
    const SimConfig& config() const { return config_; }

    /// Rest pose grounded on the floor and settled to sleep.
    SceneState initial_state() const;

    /// One fixed-dt update. A sleeping state without a gripper is returned
    /// frozen (time advances only). Throws RuntimeError naming the first
    /// offending vertex if positions diverge.
    SceneState step(const SceneState& state) const;

    /// Steps until the fastest vertex drops below the settle threshold or the
    /// settle cap of simulated time elapses.
    SceneState settle(SceneState state) const;

    /// Grasp (pin up to grasp_k nearest surface vertices within grasp_radius
    /// of p_g), move the gripper to p_r in a straight line at gripper_speed,
    /// release, settle. A grasp that reaches no vertex is a flagged no-op.
    /// The gripper target is kept above the floor plane.
    ExecResult execute(const SceneState& state, const Action& action) const;

    /// Orthographic z-buffer over the surface vertices: the frontmost point
    /// per pixel survives, everything behind it is culled.
    PartialObservation observe(const SceneState& state, const Camera& camera) const;

    /// p_g uniform over visible points, displacement from the configured
    /// spherical distribution. Throws ValidationError on an empty observation.
    Action sample_action(const PartialObservation& observation, Rng& rng) const;

    /// Full data-generation loop: observe, sample, execute, record. The scene
    /// is re-randomized (pose and obstacles) every reset_period actions.
    Trajectory simulate(int actions, uint64_t seed, int reset_period = 15) const;

private:
    SceneState randomized_scene(Rng& rng) const;

    const TetMesh& mesh_;
    SimConfig config_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<double> rest_lengths_;   // parallel to edges_
    std::vector<double> rest_volumes_;   // per tet
};

/// JSON-lines trajectory file: one record per action carrying pre/post vertex
/// arrays, flow, observation, action, seed, and config hash.
void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

}  // namespace defo::sim

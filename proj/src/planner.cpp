#include "defo/planner.hpp"

#include "defo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace defo::plan {

const char* to_string(DynamicsKind kind) {
    return kind == DynamicsKind::Oracle ? "oracle" : "learned";
}

const char* to_string(CostKind kind) { return kind == CostKind::Dcorr ? "dcorr" : "chamfer"; }

DynamicsKind dynamics_from_string(const std::string& name) {
    if (name == "oracle") return DynamicsKind::Oracle;
    if (name == "learned") return DynamicsKind::Learned;
    throw ValidationError("unknown dynamics kind '" + name + "', expected oracle or learned");
}

CostKind cost_from_string(const std::string& name) {
    if (name == "dcorr") return CostKind::Dcorr;
    if (name == "chamfer") return CostKind::Chamfer;
    throw ValidationError("unknown cost kind '" + name + "', expected dcorr or chamfer");
}

void PlanProblem::validate() const {
    std::vector<std::string> bad;
    if (candidates < 1) bad.push_back("candidate count must be at least 1");
    if (horizon < 1) bad.push_back("horizon must be at least 1");
    if (!(success_radius > 0.0)) bad.push_back("success radius must be positive");
    if (start.positions.empty()) bad.push_back("start state has no points");
    if (target.positions.size() != start.positions.size())
        bad.push_back("start and target must be configurations of the same point set");
    if (!bad.empty()) throw ValidationError("plan problem", bad);
}

namespace {

void check_setup(const PlanSetup& setup, const sim::Simulator& simulator,
                 const PlanProblem& problem) {
    std::vector<std::string> bad;
    if ((setup.dynamics == DynamicsKind::Learned || setup.learned_matching) && !setup.model)
        bad.push_back("learned dynamics or matching needs a model");
    size_t nv = static_cast<size_t>(simulator.mesh().num_vertices());
    if (problem.start.positions.size() != nv)
        bad.push_back("start state does not cover the mesh vertices (" +
                      std::to_string(problem.start.positions.size()) + " of " +
                      std::to_string(nv) + ")");
    if (!bad.empty()) throw ValidationError("plan setup", bad);
}

corr::Correspondence start_to_target(const PlanSetup& setup, const PlanProblem& problem) {
    corr::Correspondence xi;
    size_t n = problem.start.positions.size();
    if (!setup.learned_matching) {
        xi.target.resize(n);
        std::iota(xi.target.begin(), xi.target.end(), 0);
        xi.distance.assign(n, 0.0);
        return xi;
    }
    std::vector<nn::Vector> f_src, f_tgt;
    f_src.reserve(n);
    f_tgt.reserve(n);
    for (const Vec3& p : problem.start.positions) f_src.push_back(setup.model->embed(p));
    for (const Vec3& p : problem.target.positions) f_tgt.push_back(setup.model->embed(p));
    return corr::match(f_src, f_tgt);
}

double final_cost(const std::vector<Vec3>& final_points, const PlanProblem& problem,
                  const corr::Correspondence& xi) {
    if (problem.cost == CostKind::Dcorr)
        return corr::d_corr(final_points, problem.target.positions, xi);
    return metrics::chamfer(final_points, problem.target.positions);
}

Rollout roll_oracle(const sim::Simulator& simulator, const PlanProblem& problem, Rng& rng) {
    Rollout r;
    sim::SceneState state = problem.start;
    for (int t = 0; t < problem.horizon; ++t) {
        sim::PartialObservation obs = simulator.observe(state, problem.camera);
        if (obs.empty()) return r;
        sim::Action action = simulator.sample_action(obs, rng);
        sim::ExecResult exec = simulator.execute(state, action);
        if (exec.missed) return r;
        state = std::move(exec.post);
        r.actions.push_back(action);
        r.states.push_back(state.positions);
    }
    r.valid = true;
    return r;
}

Rollout roll_learned(const sim::Simulator& simulator, const heads::ImplicitModel& model,
                     const PlanProblem& problem, Rng& rng) {
    Rollout r;
    std::vector<Vec3> points = problem.start.positions;

    // geometry features evaluated once at the start positions and reused
    std::vector<heads::ImplicitModel::FrozenFeatures> frozen;
    frozen.reserve(points.size());
    for (const Vec3& p : points) frozen.push_back(model.freeze(p));

    sim::SceneState shell = problem.start;  // positions swapped in per step
    for (int t = 0; t < problem.horizon; ++t) {
        shell.positions = points;
        sim::PartialObservation obs = simulator.observe(shell, problem.camera);
        if (obs.empty()) return r;
        sim::Action action = simulator.sample_action(obs, rng);
        field::FeatureField dyn =
            heads::build_dynamics_field(obs.points, action, model.config());
        for (size_t i = 0; i < points.size(); ++i)
            points[i] += model.flow_frozen(dyn, points[i], frozen[i]);
        r.actions.push_back(action);
        r.states.push_back(points);
    }
    r.valid = true;
    return r;
}

}  // namespace

std::vector<int> rank_rollouts(const std::vector<Rollout>& rollouts) {
    auto key = [&](int i) {
        double c = rollouts[static_cast<size_t>(i)].cost;
        return std::isfinite(c) && rollouts[static_cast<size_t>(i)].valid
                   ? c
                   : std::numeric_limits<double>::infinity();
    };
    std::vector<int> order(rollouts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
    return order;
}

PlanResult plan(const sim::Simulator& simulator, const PlanSetup& setup,
                const PlanProblem& problem, uint64_t seed) {
    problem.validate();
    check_setup(setup, simulator, problem);

    PlanResult res;
    res.xi = start_to_target(setup, problem);
    res.rollouts.resize(static_cast<size_t>(problem.candidates));

    Rng root(seed);
    for (int k = 0; k < problem.candidates; ++k) {
        Rng child = root.child(static_cast<uint64_t>(k));
        Rollout& r = res.rollouts[static_cast<size_t>(k)];
        r = setup.dynamics == DynamicsKind::Oracle
                ? roll_oracle(simulator, problem, child)
                : roll_learned(simulator, *setup.model, problem, child);
        if (r.valid) r.cost = final_cost(r.states.back(), problem, res.xi);
        if (!std::isfinite(r.cost)) {  // degenerate models are as failed as misses
            r.valid = false;
            r.cost = std::numeric_limits<double>::infinity();
        }
    }

    res.ranking = rank_rollouts(res.rollouts);
    res.best = res.ranking.front();
    if (!res.rollouts[static_cast<size_t>(res.best)].valid)
        throw RuntimeError("all " + std::to_string(problem.candidates) + " roll-outs failed");
    return res;
}

PlanEvaluation evaluate_plan(const sim::Simulator& simulator, const PlanProblem& problem,
                             const std::vector<sim::Action>& actions, int miou_samples,
                             uint64_t miou_seed) {
    problem.validate();
    PlanEvaluation ev;
    sim::SceneState state = problem.start;
    for (const sim::Action& action : actions) state = simulator.execute(state, action).post;
    ev.final_state = state;

    const std::vector<Vec3>& final_points = state.positions;
    const std::vector<Vec3>& target = problem.target.positions;
    corr::Correspondence identity;
    identity.target.resize(final_points.size());
    std::iota(identity.target.begin(), identity.target.end(), 0);
    identity.distance.assign(final_points.size(), 0.0);

    ev.corresponded = corr::d_corr(final_points, target, identity);
    ev.chamfer = metrics::chamfer(final_points, target);
    ev.fscore = metrics::fscore(final_points, target).f;

    const tetmesh::TetMesh& mesh = simulator.mesh();
    Aabb box = Aabb::of(final_points);
    box.expand(Aabb::of(target));
    box = box.inflated(1.2);
    auto inside = [&mesh](const std::vector<Vec3>& pos) {
        return [&mesh, &pos](const Vec3& p) {
            return tetmesh::contains_tet(mesh, pos, p).has_value();
        };
    };
    Rng miou_rng(miou_seed);
    ev.miou = metrics::miou(inside(final_points), inside(target), box, miou_samples, miou_rng).value;

    ev.success = std::sqrt(ev.corresponded) < problem.success_radius;
    return ev;
}

PlanProblem make_problem(const sim::Simulator& simulator, const sim::Camera& camera,
                         uint64_t start_seed, uint64_t target_seed, int reach) {
    if (reach < 0) throw ValidationError("problem reach must be nonnegative");
    PlanProblem problem;
    problem.camera = camera;

    sim::SceneState state = simulator.initial_state();
    Rng srng(start_seed);
    sim::PartialObservation obs = simulator.observe(state, camera);
    state = simulator.execute(state, simulator.sample_action(obs, srng)).post;
    problem.start = state;

    Rng trng(target_seed);
    for (int r = 0; r < reach; ++r) {
        obs = simulator.observe(state, camera);
        state = simulator.execute(state, simulator.sample_action(obs, trng)).post;
    }
    problem.target = std::move(state);
    return problem;
}

}  // namespace defo::plan

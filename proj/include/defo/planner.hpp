#pragma once

#include "defo/decoders.hpp"
#include "defo/matching.hpp"
#include "defo/softsim.hpp"

#include <limits>
#include <string>
#include <vector>

namespace defo::plan {

/// What predicts the next state during roll-outs: the simulator itself, or
/// the trained flow head advecting points with frozen geometry features.
enum class DynamicsKind { Oracle, Learned };

/// What scores a roll-out's final state against the target.
enum class CostKind { Dcorr, Chamfer };

const char* to_string(DynamicsKind kind);
const char* to_string(CostKind kind);
DynamicsKind dynamics_from_string(const std::string& name);
CostKind cost_from_string(const std::string& name);

/// One planning instance: start and target configurations of the same mesh,
/// the camera that forms observations, and the sampling budget.
struct PlanProblem {
    sim::SceneState start;
    sim::SceneState target;
    sim::Camera camera;
    int candidates = 64;
    int horizon = 3;
    CostKind cost = CostKind::Dcorr;
    double success_radius = 0.05;  // meters, against the root corresponded distance

    void validate() const;
};

/// Dynamics and correspondence sources for the roll-outs. The model must be
/// set when either the dynamics or the matching is learned.
struct PlanSetup {
    DynamicsKind dynamics = DynamicsKind::Oracle;
    bool learned_matching = false;  // correspondence from embeddings, not vertex identity
    const heads::ImplicitModel* model = nullptr;
};

struct Rollout {
    std::vector<sim::Action> actions;
    std::vector<std::vector<Vec3>> states;  // predicted point states s_1..s_n
    double cost = std::numeric_limits<double>::infinity();
    bool valid = false;
};

struct PlanResult {
    int best = -1;                  // candidate index of the chosen sequence
    std::vector<Rollout> rollouts;  // in candidate order
    std::vector<int> ranking;       // candidate indices sorted by cost, ties by index
    corr::Correspondence xi;        // start-to-target mapping the cost used
};

/// Candidate indices sorted by cost, ties and invalid (non-finite) costs
/// ordered by index. Invalid roll-outs always sort last.
std::vector<int> rank_rollouts(const std::vector<Rollout>& rollouts);

/// Samples `candidates` action sequences of `horizon` steps (each step's
/// grasp drawn from the current pseudo-observation), rolls every sequence
/// out, and picks the cheapest final state. Per-candidate seeding makes the
/// result independent of evaluation order. Failed roll-outs (missed grasp,
/// empty observation) keep an infinite cost and are never chosen while a
/// valid one exists; all failing is an error.
PlanResult plan(const sim::Simulator& simulator, const PlanSetup& setup,
                const PlanProblem& problem, uint64_t seed);

struct PlanEvaluation {
    double corresponded = 0.0;  // mean squared distance under vertex identity
    double chamfer = 0.0;
    double fscore = 0.0;
    double miou = 0.0;
    bool success = false;
    sim::SceneState final_state;
};

/// Executes a sequence from the problem's start state and scores the final
/// configuration against the target. Success compares the root corresponded
/// distance against the problem's radius.
PlanEvaluation evaluate_plan(const sim::Simulator& simulator, const PlanProblem& problem,
                             const std::vector<sim::Action>& actions, int miou_samples = 100000,
                             uint64_t miou_seed = 0);

/// Reachable planning instance: the start is diversified by one seeded action
/// from rest, the target by `reach` further seeded actions from the start.
PlanProblem make_problem(const sim::Simulator& simulator, const sim::Camera& camera,
                         uint64_t start_seed, uint64_t target_seed, int reach = 2);

}  // namespace defo::plan

#pragma once

#include "defo/neural.hpp"
#include "defo/softsim.hpp"
#include "defo/triplane.hpp"

#include <string>
#include <vector>

namespace defo::heads {

/// Width of the per-point action feature (grasp offset, release point).
inline constexpr int kActionFeatureDim = 6;

struct ModelConfig {
    Aabb box;                 // world region the feature planes cover
    int field_res = 32;
    int geometry_dim = 64;    // geometry feature width
    int embed_dim = 32;       // correspondence embedding width
    int hidden_dim = 32;
    int depth = 4;
    std::vector<int> skip_layers = {2};
    bool fusion = true;       // feed occupancy hidden activations to the flow head

    field::FieldDims geometry_dims() const { return {field_res, geometry_dim, box}; }
    field::FieldDims dynamics_dims() const { return {field_res, kActionFeatureDim, box}; }
    std::string hash() const;
};

/// Per-point action features (p_g - p_i, p_r). Throws on an empty point set.
std::vector<nn::Vector> action_features(const std::vector<Vec3>& points,
                                        const sim::Action& action);

/// Scatter of action features over the observed points: the flow head's
/// per-action input field. Carries no learnable parameters.
field::FeatureField build_dynamics_field(const std::vector<Vec3>& points,
                                         const sim::Action& action, const ModelConfig& config);

/// The three implicit heads over one learnable geometry feature field:
/// occupancy probability, correspondence embedding, and flow conditioned on a
/// per-action dynamics field, with the occupancy decoder's hidden activations
/// fused into the flow decoder before each layer.
class ImplicitModel {
public:
    ImplicitModel(ModelConfig config, Rng& rng);

    const ModelConfig& config() const { return config_; }
    field::FeatureField& geometry() { return geometry_; }
    const field::FeatureField& geometry() const { return geometry_; }
    nn::Mlp& occupancy_decoder() { return occ_; }
    nn::Mlp& embedding_decoder() { return embed_; }
    nn::Mlp& flow_decoder() { return flow_; }

    struct OccEval {
        nn::Vector input;  // (p, geometry feature)
        nn::Mlp::Cache cache;
        double prob = 0.0;
    };
    OccEval occupancy_eval(const Vec3& p) const;
    double occupancy(const Vec3& p) const { return occupancy_eval(p).prob; }
    /// Accumulates dL/dprob into decoder and geometry-plane gradients.
    void occupancy_backward(const Vec3& p, const OccEval& eval, double dprob);

    struct EmbedEval {
        nn::Mlp::Cache cache;
        nn::Vector f;
    };
    EmbedEval embed_eval(const Vec3& p) const;
    nn::Vector embed(const Vec3& p) const { return embed_eval(p).f; }
    void embed_backward(const Vec3& p, const EmbedEval& eval, const nn::Vector& df);

    struct FlowEval {
        OccEval occ;                      // fusion source (unused when fusion off)
        std::vector<nn::Vector> extras;   // occupancy hidden activations per layer
        nn::Mlp::Cache cache;
        Vec3 y = Vec3::Zero();
    };
    FlowEval flow_eval(const field::FeatureField& dynamics, const Vec3& p) const;
    Vec3 flow(const field::FeatureField& dynamics, const Vec3& p) const;
    /// Accumulates dL/dflow into the flow decoder and, with fusion on, the
    /// occupancy decoder and geometry planes reached through the fused taps.
    void flow_backward(const Vec3& p, const FlowEval& eval, const Vec3& dy);

    /// Geometry inputs to the flow head captured at one position, for
    /// roll-outs that advect points while keeping those features fixed.
    /// Empty when fusion is off (the flow head then reads none).
    struct FrozenFeatures {
        nn::Vector geometry;
        std::vector<nn::Vector> extras;
    };
    FrozenFeatures freeze(const Vec3& p) const;
    /// Flow at p with the dynamics features current but the geometry inputs
    /// taken from `frozen`. Matches flow() bitwise when frozen at p itself.
    Vec3 flow_frozen(const field::FeatureField& dynamics, const Vec3& p,
                     const FrozenFeatures& frozen) const;

    void zero_grad();
    std::vector<nn::ParamView> params();

    void save(const std::string& path) const;
    static ImplicitModel load(const std::string& path);

private:
    ModelConfig config_;
    field::FeatureField geometry_;
    nn::Mlp occ_;
    nn::Mlp embed_;
    nn::Mlp flow_;
};

/// Occupancy-thresholded point set: candidates kept where probability > tau.
struct ExtractedState {
    std::vector<Vec3> points;
    bool empty() const { return points.empty(); }
};
ExtractedState extract_state(const ImplicitModel& model, const std::vector<Vec3>& candidates,
                             double tau = 0.75);

/// Regular per_axis^3 lattice spanning the box, a default extraction sampler.
std::vector<Vec3> grid_candidates(const Aabb& box, int per_axis);

}  // namespace defo::heads

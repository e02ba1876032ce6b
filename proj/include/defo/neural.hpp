#pragma once

#include "defo/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace defo::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { Linear, Sigmoid };

/// A mutable parameter block paired with its gradient accumulator, both
/// contiguous and of equal length. The optimizer holds these by address, so
/// the owning storage must not move while attached.
struct ParamView {
    double* value = nullptr;
    double* grad = nullptr;
    size_t size = 0;
};

struct MlpConfig {
    int input_dim = 0;
    int output_dim = 0;
    int hidden_dim = 32;
    int depth = 4;                  // weight layers
    std::vector<int> skip_layers = {2};  // input re-concatenated before these layers
    std::vector<int> extra_dims;    // per-layer side-input widths (empty: none)
    Activation output = Activation::Linear;
};

/// Dense ReLU network with optional input re-concatenation ("skip") layers.
/// Gradients accumulate into internal buffers until zero_grad().
class Mlp {
public:
    /// Weights drawn uniformly in +-sqrt(6/(fan_in+fan_out)), biases zero.
    Mlp(MlpConfig config, Rng& rng);

    const MlpConfig& config() const { return config_; }

    struct Cache {
        std::vector<Vector> ins;   // input to each layer (skips and extras applied)
        std::vector<Vector> pres;  // pre-activation per layer
        Vector out;                // post-activation network output
    };

    /// Pure function of the inputs; fills cache for backward when given.
    /// `extras`, required iff the config declares extra_dims, carries one
    /// side input per layer, appended to that layer's input.
    Vector forward(const Vector& x, Cache* cache = nullptr,
                   const std::vector<Vector>* extras = nullptr) const;

    /// Hidden activation h_l (post-ReLU output of layer l, l in [0, depth-2])
    /// recovered from a forward cache.
    Vector hidden(const Cache& cache, int l) const;

    /// Accumulates parameter gradients and returns dL/dx. `dhidden`, when
    /// given, carries extra dL/dh_l terms for consumers of hidden activations
    /// (one vector per hidden layer; empty vectors mean zero). `dextras`,
    /// when given, receives dL/d(side input) per layer.
    Vector backward(const Cache& cache, const Vector& dy,
                    const std::vector<Vector>* dhidden = nullptr,
                    std::vector<Vector>* dextras = nullptr);

    void zero_grad();
    std::vector<ParamView> params();
    size_t param_count() const;

    nlohmann::json to_json() const;
    static Mlp from_json(const nlohmann::json& j);

    std::vector<Matrix> weights;  // [depth], rows = out, cols = in (+input if skip)
    std::vector<Vector> biases;
    std::vector<Matrix> grad_weights;
    std::vector<Vector> grad_biases;

private:
    explicit Mlp(MlpConfig config);  // shapes only, for deserialization
    bool is_skip(int layer) const;
    int base_width(int layer) const;
    int extra_width(int layer) const;
    MlpConfig config_;
};

struct AdamConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;  // decoupled
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with decoupled weight decay over attached parameter blocks.
class AdamW {
public:
    explicit AdamW(AdamConfig config = {});

    void attach(const std::vector<ParamView>& views);

    /// One update over every attached block from its accumulated gradients.
    void step();

    /// Zeros every attached gradient buffer.
    void zero_grad();

    int steps_taken() const { return t_; }

private:
    AdamConfig config_;
    std::vector<ParamView> views_;
    std::vector<Vector> m_, v_;
    int t_ = 0;
};

}  // namespace defo::nn

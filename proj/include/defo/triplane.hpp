#pragma once

#include "defo/common.hpp"
#include "defo/neural.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace defo::field {

struct FieldDims {
    int res = 32;  // grid nodes per plane axis
    int dim = 64;  // feature dimension
    Aabb box;      // world region the planes cover

    void validate() const;
};

/// Three feature planes (xy, xz, yz) of res x res nodes, each node holding a
/// dim-vector. A point projects orthographically onto each plane; its feature
/// is the sum of the three bilinear interpolations. Out-of-box points clamp
/// to the boundary. Plane storage is learnable (ParamView-exposed).
class FeatureField {
public:
    explicit FeatureField(FieldDims dims);        // zero features
    FeatureField(FieldDims dims, Rng& rng, double init_scale);  // uniform +-scale

    const FieldDims& dims() const { return dims_; }

    /// Plane k feature matrix, dim x res^2; node (i, j) lives in column
    /// j * res + i. Plane axes: 0 -> (x,y), 1 -> (x,z), 2 -> (y,z).
    nn::Matrix& plane(int k) { return planes_[k]; }
    const nn::Matrix& plane(int k) const { return planes_[k]; }

    nn::Vector query(const Vec3& p) const;

    /// Routes dL/dfeature to the 12 touched nodes with the same bilinear
    /// weights, accumulating into the gradient planes.
    void query_backward(const Vec3& p, const nn::Vector& dfeat);

    void zero_grad();
    std::vector<nn::ParamView> params();

    /// Bilinear splat of per-point features with per-node mean pooling
    /// (weighted sum over weight sum). An empty point set yields a zero field
    /// flagged via from_empty_scatter().
    static FeatureField scatter_points(const std::vector<Vec3>& points,
                                       const std::vector<nn::Vector>& features, FieldDims dims);
    bool from_empty_scatter() const { return from_empty_scatter_; }

    nlohmann::json to_json() const;
    static FeatureField from_json(const nlohmann::json& j);

private:
    struct Footprint {
        int plane;
        int cols[4];
        double w[4];
    };
    void footprints(const Vec3& p, Footprint out[3]) const;

    FieldDims dims_;
    nn::Matrix planes_[3];
    nn::Matrix grads_[3];
    bool from_empty_scatter_ = false;
};

}  // namespace defo::field

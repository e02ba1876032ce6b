#include "defo/triplane.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace defo::field {

using json = nlohmann::json;
using nn::Matrix;
using nn::Vector;

namespace {
constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
}

void FieldDims::validate() const {
    std::vector<std::string> bad;
    if (res < 2) bad.push_back("res must be at least 2");
    if (dim < 1) bad.push_back("dim must be at least 1");
    for (int a = 0; a < 3; ++a)
        if (!(box.hi[a] > box.lo[a]))
            bad.push_back("box degenerate along axis " + std::to_string(a));
    if (!bad.empty()) throw ValidationError("feature field dims", bad);
}

FeatureField::FeatureField(FieldDims dims) : dims_(dims) {
    dims_.validate();
    for (int k = 0; k < 3; ++k) {
        planes_[k] = Matrix::Zero(dims_.dim, dims_.res * dims_.res);
        grads_[k] = Matrix::Zero(dims_.dim, dims_.res * dims_.res);
    }
}

FeatureField::FeatureField(FieldDims dims, Rng& rng, double init_scale) : FeatureField(dims) {
    for (auto& plane : planes_)
        for (Eigen::Index j = 0; j < plane.cols(); ++j)
            for (Eigen::Index i = 0; i < plane.rows(); ++i)
                plane(i, j) = rng.uniform(-init_scale, init_scale);
}

void FeatureField::footprints(const Vec3& p, Footprint out[3]) const {
    const int res = dims_.res;
    for (int k = 0; k < 3; ++k) {
        double g[2];
        for (int a = 0; a < 2; ++a) {
            int axis = kPlaneAxes[k][a];
            double span = dims_.box.hi[axis] - dims_.box.lo[axis];
            double s = (p[axis] - dims_.box.lo[axis]) / span;
            s = std::clamp(s, 0.0, 1.0);
            g[a] = s * (res - 1);
        }
        int i0 = std::min(static_cast<int>(g[0]), res - 2);
        int j0 = std::min(static_cast<int>(g[1]), res - 2);
        double fi = g[0] - i0, fj = g[1] - j0;
        out[k].plane = k;
        out[k].cols[0] = j0 * res + i0;
        out[k].cols[1] = j0 * res + i0 + 1;
        out[k].cols[2] = (j0 + 1) * res + i0;
        out[k].cols[3] = (j0 + 1) * res + i0 + 1;
        out[k].w[0] = (1.0 - fi) * (1.0 - fj);
        out[k].w[1] = fi * (1.0 - fj);
        out[k].w[2] = (1.0 - fi) * fj;
        out[k].w[3] = fi * fj;
    }
}

Vector FeatureField::query(const Vec3& p) const {
    Footprint fp[3];
    footprints(p, fp);
    Vector out = Vector::Zero(dims_.dim);
    for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 4; ++c) out += fp[k].w[c] * planes_[k].col(fp[k].cols[c]);
    return out;
}

void FeatureField::query_backward(const Vec3& p, const Vector& dfeat) {
    if (dfeat.size() != dims_.dim)
        throw ValidationError("feature field backward: gradient size mismatch");
    Footprint fp[3];
    footprints(p, fp);
    for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 4; ++c) grads_[k].col(fp[k].cols[c]) += fp[k].w[c] * dfeat;
}

void FeatureField::zero_grad() {
    for (auto& g : grads_) g.setZero();
}

std::vector<nn::ParamView> FeatureField::params() {
    std::vector<nn::ParamView> out;
    for (int k = 0; k < 3; ++k)
        out.push_back({planes_[k].data(), grads_[k].data(),
                       static_cast<size_t>(planes_[k].size())});
    return out;
}

FeatureField FeatureField::scatter_points(const std::vector<Vec3>& points,
                                          const std::vector<Vector>& features, FieldDims dims) {
    if (points.size() != features.size())
        throw ValidationError("scatter: points/features size mismatch");
    FeatureField field(dims);
    if (points.empty()) {
        field.from_empty_scatter_ = true;
        return field;
    }
    Matrix wsum[3];
    for (int k = 0; k < 3; ++k) wsum[k] = Matrix::Zero(1, dims.res * dims.res);
    for (size_t i = 0; i < points.size(); ++i) {
        if (features[i].size() != dims.dim)
            throw ValidationError("scatter: feature " + std::to_string(i) + " has size " +
                                  std::to_string(features[i].size()) + ", expected " +
                                  std::to_string(dims.dim));
        Footprint fp[3];
        field.footprints(points[i], fp);
        for (int k = 0; k < 3; ++k)
            for (int c = 0; c < 4; ++c) {
                field.planes_[k].col(fp[k].cols[c]) += fp[k].w[c] * features[i];
                wsum[k](0, fp[k].cols[c]) += fp[k].w[c];
            }
    }
    for (int k = 0; k < 3; ++k)
        for (Eigen::Index c = 0; c < wsum[k].cols(); ++c)
            if (wsum[k](0, c) > 0.0) field.planes_[k].col(c) /= wsum[k](0, c);
    return field;
}

json FeatureField::to_json() const {
    json j;
    j["res"] = dims_.res;
    j["dim"] = dims_.dim;
    j["box_lo"] = {dims_.box.lo.x(), dims_.box.lo.y(), dims_.box.lo.z()};
    j["box_hi"] = {dims_.box.hi.x(), dims_.box.hi.y(), dims_.box.hi.z()};
    j["planes"] = json::array();
    for (const auto& plane : planes_)
        j["planes"].push_back(std::vector<double>(plane.data(), plane.data() + plane.size()));
    return j;
}

FeatureField FeatureField::from_json(const json& j) {
    FieldDims dims;
    try {
        dims.res = j.at("res").get<int>();
        dims.dim = j.at("dim").get<int>();
        auto lo = j.at("box_lo").get<std::vector<double>>();
        auto hi = j.at("box_hi").get<std::vector<double>>();
        if (lo.size() != 3 || hi.size() != 3)
            throw ValidationError("feature field checkpoint: malformed box");
        dims.box.lo = Vec3(lo[0], lo[1], lo[2]);
        dims.box.hi = Vec3(hi[0], hi[1], hi[2]);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("feature field checkpoint: ") + e.what());
    }
    FeatureField field(dims);
    const json& planes = j.at("planes");
    if (planes.size() != 3) throw ValidationError("feature field checkpoint: expected 3 planes");
    for (int k = 0; k < 3; ++k) {
        auto data = planes[k].get<std::vector<double>>();
        if (data.size() != static_cast<size_t>(field.planes_[k].size()))
            throw ValidationError("feature field checkpoint: plane " + std::to_string(k) +
                                  " has " + std::to_string(data.size()) + " values");
        std::copy(data.begin(), data.end(), field.planes_[k].data());
    }
    return field;
}

}  // namespace defo::field

#include "defo/decoders.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>
#include <utility>

using json = nlohmann::json;

namespace defo::heads {
namespace {

void validate_model_config(const ModelConfig& c) {
    c.geometry_dims().validate();
    if (c.embed_dim < 1) throw ValidationError("embed_dim must be positive");
    if (c.hidden_dim < 1) throw ValidationError("hidden_dim must be positive");
    if (c.depth < 1) throw ValidationError("depth must be positive");
    if (c.fusion && c.depth < 2)
        throw ValidationError("fusion requires at least one hidden layer to tap");
}

nn::MlpConfig occ_config(const ModelConfig& c) {
    nn::MlpConfig m;
    m.input_dim = 3 + c.geometry_dim;
    m.output_dim = 1;
    m.hidden_dim = c.hidden_dim;
    m.depth = c.depth;
    m.skip_layers = c.skip_layers;
    m.output = nn::Activation::Sigmoid;
    return m;
}

nn::MlpConfig embed_config(const ModelConfig& c) {
    nn::MlpConfig m = occ_config(c);
    m.output_dim = c.embed_dim;
    m.output = nn::Activation::Linear;
    return m;
}

nn::MlpConfig flow_config(const ModelConfig& c) {
    nn::MlpConfig m;
    m.input_dim = 3 + kActionFeatureDim + (c.fusion ? c.geometry_dim : 0);
    m.output_dim = 3;
    m.hidden_dim = c.hidden_dim;
    m.depth = c.depth;
    m.skip_layers = c.skip_layers;
    m.output = nn::Activation::Linear;
    if (c.fusion) {
        m.extra_dims.assign(static_cast<size_t>(c.depth), c.hidden_dim);
        m.extra_dims[0] = 0;  // taps feed every layer after the first
    }
    return m;
}

ModelConfig validated(ModelConfig c) {
    validate_model_config(c);
    return c;
}

constexpr double kFieldInitScale = 0.1;

}  // namespace

std::string ModelConfig::hash() const {
    ConfigHasher h;
    for (int k = 0; k < 3; ++k) {
        h.add("box_lo" + std::to_string(k), box.lo[k]);
        h.add("box_hi" + std::to_string(k), box.hi[k]);
    }
    h.add("field_res", field_res);
    h.add("geometry_dim", geometry_dim);
    h.add("embed_dim", embed_dim);
    h.add("hidden_dim", hidden_dim);
    h.add("depth", depth);
    for (int l : skip_layers) h.add("skip", l);
    h.add("fusion", fusion);
    return h.hex();
}

std::vector<nn::Vector> action_features(const std::vector<Vec3>& points,
                                        const sim::Action& action) {
    if (points.empty()) throw ValidationError("action_features: empty point set");
    std::vector<nn::Vector> out(points.size(), nn::Vector(kActionFeatureDim));
    for (size_t i = 0; i < points.size(); ++i) {
        out[i].head<3>() = action.p_g - points[i];
        out[i].tail<3>() = action.p_r;
    }
    return out;
}

field::FeatureField build_dynamics_field(const std::vector<Vec3>& points,
                                         const sim::Action& action, const ModelConfig& config) {
    return field::FeatureField::scatter_points(points, action_features(points, action),
                                               config.dynamics_dims());
}

ImplicitModel::ImplicitModel(ModelConfig config, Rng& rng)
    : config_(validated(std::move(config))),
      geometry_(config_.geometry_dims(), rng, kFieldInitScale),
      occ_(occ_config(config_), rng),
      embed_(embed_config(config_), rng),
      flow_(flow_config(config_), rng) {}

ImplicitModel::OccEval ImplicitModel::occupancy_eval(const Vec3& p) const {
    OccEval e;
    e.input.resize(3 + config_.geometry_dim);
    e.input.head<3>() = p;
    e.input.tail(config_.geometry_dim) = geometry_.query(p);
    e.prob = occ_.forward(e.input, &e.cache)(0);
    return e;
}

void ImplicitModel::occupancy_backward(const Vec3& p, const OccEval& eval, double dprob) {
    nn::Vector dy(1);
    dy(0) = dprob;
    nn::Vector din = occ_.backward(eval.cache, dy);
    geometry_.query_backward(p, din.tail(config_.geometry_dim));
}

ImplicitModel::EmbedEval ImplicitModel::embed_eval(const Vec3& p) const {
    EmbedEval e;
    nn::Vector input(3 + config_.geometry_dim);
    input.head<3>() = p;
    input.tail(config_.geometry_dim) = geometry_.query(p);
    e.f = embed_.forward(input, &e.cache);
    return e;
}

void ImplicitModel::embed_backward(const Vec3& p, const EmbedEval& eval, const nn::Vector& df) {
    nn::Vector din = embed_.backward(eval.cache, df);
    geometry_.query_backward(p, din.tail(config_.geometry_dim));
}

ImplicitModel::FlowEval ImplicitModel::flow_eval(const field::FeatureField& dynamics,
                                                 const Vec3& p) const {
    if (dynamics.dims().dim != kActionFeatureDim)
        throw ValidationError("flow_eval: dynamics field width must be " +
                              std::to_string(kActionFeatureDim));
    FlowEval e;
    nn::Vector input(flow_.config().input_dim);
    input.head<3>() = p;
    input.segment(3, kActionFeatureDim) = dynamics.query(p);
    if (config_.fusion) {
        e.occ = occupancy_eval(p);
        input.tail(config_.geometry_dim) = e.occ.input.tail(config_.geometry_dim);
        e.extras.resize(static_cast<size_t>(config_.depth));
        e.extras[0] = nn::Vector(0);
        for (int l = 1; l < config_.depth; ++l)
            e.extras[static_cast<size_t>(l)] = occ_.hidden(e.occ.cache, l - 1);
    }
    e.y = flow_.forward(input, &e.cache, config_.fusion ? &e.extras : nullptr);
    return e;
}

Vec3 ImplicitModel::flow(const field::FeatureField& dynamics, const Vec3& p) const {
    return flow_eval(dynamics, p).y;
}

ImplicitModel::FrozenFeatures ImplicitModel::freeze(const Vec3& p) const {
    FrozenFeatures f;
    if (!config_.fusion) return f;
    OccEval e = occupancy_eval(p);
    f.geometry = e.input.tail(config_.geometry_dim);
    f.extras.resize(static_cast<size_t>(config_.depth));
    f.extras[0] = nn::Vector(0);
    for (int l = 1; l < config_.depth; ++l)
        f.extras[static_cast<size_t>(l)] = occ_.hidden(e.cache, l - 1);
    return f;
}

Vec3 ImplicitModel::flow_frozen(const field::FeatureField& dynamics, const Vec3& p,
                                const FrozenFeatures& frozen) const {
    if (dynamics.dims().dim != kActionFeatureDim)
        throw ValidationError("flow_frozen: dynamics field width must be " +
                              std::to_string(kActionFeatureDim));
    nn::Vector input(flow_.config().input_dim);
    input.head<3>() = p;
    input.segment(3, kActionFeatureDim) = dynamics.query(p);
    if (!config_.fusion) {
        nn::Vector y = flow_.forward(input);
        return Vec3(y(0), y(1), y(2));
    }
    if (frozen.geometry.size() != config_.geometry_dim ||
        frozen.extras.size() != static_cast<size_t>(config_.depth))
        throw ValidationError("flow_frozen: frozen features do not match the model");
    input.tail(config_.geometry_dim) = frozen.geometry;
    nn::Vector y = flow_.forward(input, nullptr, &frozen.extras);
    return Vec3(y(0), y(1), y(2));
}

void ImplicitModel::flow_backward(const Vec3& p, const FlowEval& eval, const Vec3& dy) {
    nn::Vector dyv = dy;
    if (!config_.fusion) {
        flow_.backward(eval.cache, dyv);
        return;
    }
    std::vector<nn::Vector> dextras;
    nn::Vector din = flow_.backward(eval.cache, dyv, nullptr, &dextras);
    geometry_.query_backward(p, din.tail(config_.geometry_dim));
    std::vector<nn::Vector> dhidden(static_cast<size_t>(config_.depth - 1));
    for (int l = 1; l < config_.depth; ++l)
        dhidden[static_cast<size_t>(l - 1)] = dextras[static_cast<size_t>(l)];
    nn::Vector dprob = nn::Vector::Zero(1);
    nn::Vector docc_in = occ_.backward(eval.occ.cache, dprob, &dhidden);
    geometry_.query_backward(p, docc_in.tail(config_.geometry_dim));
}

void ImplicitModel::zero_grad() {
    geometry_.zero_grad();
    occ_.zero_grad();
    embed_.zero_grad();
    flow_.zero_grad();
}

std::vector<nn::ParamView> ImplicitModel::params() {
    std::vector<nn::ParamView> views = geometry_.params();
    for (nn::Mlp* m : {&occ_, &embed_, &flow_}) {
        auto v = m->params();
        views.insert(views.end(), v.begin(), v.end());
    }
    return views;
}

void ImplicitModel::save(const std::string& path) const {
    json j;
    j["version"] = kToolVersion;
    j["config"] = {{"box_lo", {config_.box.lo.x(), config_.box.lo.y(), config_.box.lo.z()}},
                   {"box_hi", {config_.box.hi.x(), config_.box.hi.y(), config_.box.hi.z()}},
                   {"field_res", config_.field_res},
                   {"geometry_dim", config_.geometry_dim},
                   {"embed_dim", config_.embed_dim},
                   {"hidden_dim", config_.hidden_dim},
                   {"depth", config_.depth},
                   {"skip_layers", config_.skip_layers},
                   {"fusion", config_.fusion}};
    j["config_hash"] = config_.hash();
    j["geometry"] = geometry_.to_json();
    j["occupancy_decoder"] = occ_.to_json();
    j["embedding_decoder"] = embed_.to_json();
    j["flow_decoder"] = flow_.to_json();
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot open for writing: " + path);
    out << j.dump() << '\n';
}

ImplicitModel ImplicitModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint " + path + ": " + e.what());
    }
    ModelConfig c;
    const json& jc = j.at("config");
    for (int k = 0; k < 3; ++k) {
        c.box.lo[k] = jc.at("box_lo").at(k).get<double>();
        c.box.hi[k] = jc.at("box_hi").at(k).get<double>();
    }
    c.field_res = jc.at("field_res").get<int>();
    c.geometry_dim = jc.at("geometry_dim").get<int>();
    c.embed_dim = jc.at("embed_dim").get<int>();
    c.hidden_dim = jc.at("hidden_dim").get<int>();
    c.depth = jc.at("depth").get<int>();
    c.skip_layers = jc.at("skip_layers").get<std::vector<int>>();
    c.fusion = jc.at("fusion").get<bool>();
    if (j.at("config_hash").get<std::string>() != c.hash())
        throw ValidationError("checkpoint " + path + ": config hash mismatch");
    Rng rng(0);
    ImplicitModel model(c, rng);
    model.geometry_ = field::FeatureField::from_json(j.at("geometry"));
    model.occ_ = nn::Mlp::from_json(j.at("occupancy_decoder"));
    model.embed_ = nn::Mlp::from_json(j.at("embedding_decoder"));
    model.flow_ = nn::Mlp::from_json(j.at("flow_decoder"));
    if (model.geometry_.dims().res != c.field_res || model.geometry_.dims().dim != c.geometry_dim)
        throw ValidationError("checkpoint " + path + ": geometry field shape mismatch");
    if (model.occ_.config().input_dim != occ_config(c).input_dim ||
        model.embed_.config().output_dim != c.embed_dim ||
        model.flow_.config().input_dim != flow_config(c).input_dim)
        throw ValidationError("checkpoint " + path + ": decoder shape mismatch");
    return model;
}

ExtractedState extract_state(const ImplicitModel& model, const std::vector<Vec3>& candidates,
                             double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0,1)");
    ExtractedState s;
    for (const Vec3& p : candidates)
        if (model.occupancy(p) > tau) s.points.push_back(p);
    return s;
}

std::vector<Vec3> grid_candidates(const Aabb& box, int per_axis) {
    if (per_axis < 2) throw ValidationError("per_axis must be at least 2");
    std::vector<Vec3> pts;
    pts.reserve(static_cast<size_t>(per_axis) * per_axis * per_axis);
    Vec3 span = box.hi - box.lo;
    for (int i = 0; i < per_axis; ++i)
        for (int j = 0; j < per_axis; ++j)
            for (int k = 0; k < per_axis; ++k) {
                Vec3 s(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
                pts.push_back(box.lo + (s / (per_axis - 1)).cwiseProduct(span));
            }
    return pts;
}

}  // namespace defo::heads

#include "defo/neural.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace defo::nn {

using json = nlohmann::json;

namespace {

void validate_config(const MlpConfig& c) {
    std::vector<std::string> bad;
    if (c.input_dim <= 0) bad.push_back("input_dim must be positive");
    if (c.output_dim <= 0) bad.push_back("output_dim must be positive");
    if (c.depth <= 0) bad.push_back("depth must be positive");
    if (c.depth > 1 && c.hidden_dim <= 0) bad.push_back("hidden_dim must be positive");
    for (int l : c.skip_layers)
        if (l < 1 || l >= c.depth)
            bad.push_back("skip layer " + std::to_string(l) + " outside [1, depth)");
    if (!c.extra_dims.empty() && static_cast<int>(c.extra_dims.size()) != c.depth)
        bad.push_back("extra_dims must have one entry per layer");
    for (int d : c.extra_dims)
        if (d < 0) bad.push_back("extra_dims entries must be nonnegative");
    if (!bad.empty()) throw ValidationError("mlp config", bad);
}

}  // namespace

Mlp::Mlp(MlpConfig config) : config_(std::move(config)) {
    validate_config(config_);
    for (int l = 0; l < config_.depth; ++l) {
        int in = base_width(l) + (is_skip(l) ? config_.input_dim : 0) + extra_width(l);
        int out = l == config_.depth - 1 ? config_.output_dim : config_.hidden_dim;
        weights.emplace_back(Matrix::Zero(out, in));
        biases.emplace_back(Vector::Zero(out));
        grad_weights.emplace_back(Matrix::Zero(out, in));
        grad_biases.emplace_back(Vector::Zero(out));
    }
}

Mlp::Mlp(MlpConfig config, Rng& rng) : Mlp(std::move(config)) {
    for (auto& W : weights) {
        double bound = std::sqrt(6.0 / (W.cols() + W.rows()));
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-bound, bound);
    }
}

bool Mlp::is_skip(int layer) const {
    return std::find(config_.skip_layers.begin(), config_.skip_layers.end(), layer) !=
           config_.skip_layers.end();
}

int Mlp::base_width(int layer) const {
    return layer == 0 ? config_.input_dim : config_.hidden_dim;
}

int Mlp::extra_width(int layer) const {
    return config_.extra_dims.empty() ? 0 : config_.extra_dims[layer];
}

Vector Mlp::forward(const Vector& x, Cache* cache, const std::vector<Vector>* extras) const {
    if (x.size() != config_.input_dim)
        throw ValidationError("mlp forward: input size " + std::to_string(x.size()) +
                              ", expected " + std::to_string(config_.input_dim));
    if (!config_.extra_dims.empty()) {
        if (!extras || static_cast<int>(extras->size()) != config_.depth)
            throw ValidationError("mlp forward: expected one side input per layer");
        for (int l = 0; l < config_.depth; ++l)
            if ((*extras)[l].size() != extra_width(l))
                throw ValidationError("mlp forward: side input size mismatch at layer " +
                                      std::to_string(l));
    }
    if (cache) {
        cache->ins.assign(config_.depth, {});
        cache->pres.assign(config_.depth, {});
    }
    Vector z = x;
    for (int l = 0; l < config_.depth; ++l) {
        Vector in(base_width(l) + (is_skip(l) ? config_.input_dim : 0) + extra_width(l));
        if (is_skip(l) && extra_width(l) > 0)
            in << z, x, (*extras)[l];
        else if (is_skip(l))
            in << z, x;
        else if (extra_width(l) > 0)
            in << z, (*extras)[l];
        else
            in = z;
        Vector a = weights[l] * in + biases[l];
        if (cache) {
            cache->ins[l] = std::move(in);
            cache->pres[l] = a;
        }
        if (l < config_.depth - 1)
            z = a.cwiseMax(0.0);
        else if (config_.output == Activation::Sigmoid)
            z = (1.0 + (-a.array()).exp()).inverse().matrix();
        else
            z = a;
    }
    if (cache) cache->out = z;
    return z;
}

Vector Mlp::hidden(const Cache& cache, int l) const {
    if (l < 0 || l >= config_.depth - 1)
        throw ValidationError("mlp hidden: layer " + std::to_string(l) + " outside [0, depth-1)");
    return cache.pres[l].cwiseMax(0.0);
}

Vector Mlp::backward(const Cache& cache, const Vector& dy, const std::vector<Vector>* dhidden,
                     std::vector<Vector>* dextras) {
    if (dy.size() != config_.output_dim)
        throw ValidationError("mlp backward: gradient size " + std::to_string(dy.size()) +
                              ", expected " + std::to_string(config_.output_dim));
    if (dhidden && static_cast<int>(dhidden->size()) != config_.depth - 1)
        throw ValidationError("mlp backward: expected one hidden gradient per hidden layer");
    if (dextras) dextras->assign(config_.depth, {});

    Vector dx_skips = Vector::Zero(config_.input_dim);
    Vector dz = dy;
    for (int l = config_.depth - 1; l >= 0; --l) {
        if (l < config_.depth - 1 && dhidden && (*dhidden)[l].size() > 0) {
            if ((*dhidden)[l].size() != dz.size())
                throw ValidationError("mlp backward: hidden gradient size mismatch at layer " +
                                      std::to_string(l));
            dz += (*dhidden)[l];
        }
        Vector da;
        if (l < config_.depth - 1)
            da = (cache.pres[l].array() > 0.0).select(dz, 0.0);
        else if (config_.output == Activation::Sigmoid)
            da = dz.array() * cache.out.array() * (1.0 - cache.out.array());
        else
            da = dz;
        grad_weights[l] += da * cache.ins[l].transpose();
        grad_biases[l] += da;
        Vector din = weights[l].transpose() * da;
        int base = base_width(l);
        int skip = is_skip(l) ? config_.input_dim : 0;
        int extra = extra_width(l);
        if (extra > 0 && dextras) (*dextras)[l] = din.tail(extra);
        if (skip > 0) dx_skips += din.segment(base, skip);
        dz = din.head(base);
    }
    return dz + dx_skips;
}

void Mlp::zero_grad() {
    for (auto& g : grad_weights) g.setZero();
    for (auto& g : grad_biases) g.setZero();
}

std::vector<ParamView> Mlp::params() {
    std::vector<ParamView> out;
    for (size_t l = 0; l < weights.size(); ++l) {
        out.push_back({weights[l].data(), grad_weights[l].data(),
                       static_cast<size_t>(weights[l].size())});
        out.push_back({biases[l].data(), grad_biases[l].data(),
                       static_cast<size_t>(biases[l].size())});
    }
    return out;
}

size_t Mlp::param_count() const {
    size_t n = 0;
    for (const auto& W : weights) n += W.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

json Mlp::to_json() const {
    json j;
    j["input_dim"] = config_.input_dim;
    j["output_dim"] = config_.output_dim;
    j["hidden_dim"] = config_.hidden_dim;
    j["depth"] = config_.depth;
    j["skip_layers"] = config_.skip_layers;
    j["extra_dims"] = config_.extra_dims;
    j["output"] = config_.output == Activation::Sigmoid ? "sigmoid" : "linear";
    j["weights"] = json::array();
    j["biases"] = json::array();
    for (const auto& W : weights)
        j["weights"].push_back(std::vector<double>(W.data(), W.data() + W.size()));
    for (const auto& b : biases)
        j["biases"].push_back(std::vector<double>(b.data(), b.data() + b.size()));
    return j;
}

Mlp Mlp::from_json(const json& j) {
    MlpConfig c;
    try {
        c.input_dim = j.at("input_dim").get<int>();
        c.output_dim = j.at("output_dim").get<int>();
        c.hidden_dim = j.at("hidden_dim").get<int>();
        c.depth = j.at("depth").get<int>();
        c.skip_layers = j.at("skip_layers").get<std::vector<int>>();
        c.extra_dims = j.at("extra_dims").get<std::vector<int>>();
        c.output = j.at("output").get<std::string>() == "sigmoid" ? Activation::Sigmoid
                                                                  : Activation::Linear;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("mlp checkpoint: ") + e.what());
    }
    Mlp mlp(c);
    const json& ws = j.at("weights");
    const json& bs = j.at("biases");
    if (ws.size() != mlp.weights.size() || bs.size() != mlp.biases.size())
        throw ValidationError("mlp checkpoint: layer count mismatch");
    for (size_t l = 0; l < mlp.weights.size(); ++l) {
        auto w = ws[l].get<std::vector<double>>();
        auto b = bs[l].get<std::vector<double>>();
        if (w.size() != static_cast<size_t>(mlp.weights[l].size()) ||
            b.size() != static_cast<size_t>(mlp.biases[l].size()))
            throw ValidationError("mlp checkpoint: shape mismatch at layer " + std::to_string(l));
        std::copy(w.begin(), w.end(), mlp.weights[l].data());
        std::copy(b.begin(), b.end(), mlp.biases[l].data());
    }
    return mlp;
}

AdamW::AdamW(AdamConfig config) : config_(config) {}

void AdamW::attach(const std::vector<ParamView>& views) {
    for (const auto& v : views) {
        if (!v.value || !v.grad) throw ValidationError("optimizer: null parameter view");
        views_.push_back(v);
        m_.emplace_back(Vector::Zero(v.size));
        v_.emplace_back(Vector::Zero(v.size));
    }
}

void AdamW::step() {
    ++t_;
    double c1 = 1.0 - std::pow(config_.beta1, t_);
    double c2 = 1.0 - std::pow(config_.beta2, t_);
    for (size_t k = 0; k < views_.size(); ++k) {
        Eigen::Map<Vector> w(views_[k].value, views_[k].size);
        Eigen::Map<const Vector> g(views_[k].grad, views_[k].size);
        m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
        v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseProduct(g);
        w.array() -= config_.lr * ((m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() +
                                                           config_.eps) +
                                   config_.weight_decay * w.array());
    }
}

void AdamW::zero_grad() {
    for (auto& v : views_) Eigen::Map<Vector>(v.grad, v.size).setZero();
}

}  // namespace defo::nn

#include "defo/decoders.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace defo;
using namespace defo::heads;
using nn::Vector;

namespace {

ModelConfig small_config(bool fusion = true) {
    ModelConfig c;
    c.box = {Vec3(-0.5, -0.5, 0.0), Vec3(0.5, 0.5, 1.0)};
    c.field_res = 3;
    c.geometry_dim = 4;
    c.embed_dim = 5;
    c.hidden_dim = 8;
    c.depth = 3;
    c.skip_layers = {2};
    c.fusion = fusion;
    return c;
}

void zero_mlp(nn::Mlp& m) {
    for (auto& W : m.weights) W.setZero();
    for (auto& b : m.biases) b.setZero();
}

double min_pre_margin(const nn::Mlp& net, const nn::Mlp::Cache& cache) {
    double m = std::numeric_limits<double>::infinity();
    for (int l = 0; l + 1 < net.config().depth; ++l)
        m = std::min(m, cache.pres[static_cast<size_t>(l)].cwiseAbs().minCoeff());
    return m;
}

bool grad_close(double analytic, double fd, double tol = 1e-4) {
    return std::abs(analytic - fd) <= tol * std::max({1.0, std::abs(analytic), std::abs(fd)});
}

field::FeatureField unit_dynamics(const ModelConfig& c, Rng& rng) {
    return {c.dynamics_dims(), rng, 0.5};
}

Vec3 sample_in(const Aabb& box, Rng& rng) {
    return {rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
            rng.uniform(box.lo.z(), box.hi.z())};
}

}  // namespace

TEST_CASE("zeroed occupancy decoder reports one half everywhere") {
    Rng rng(1);
    ImplicitModel model(small_config(), rng);
    zero_mlp(model.occupancy_decoder());
    Rng pr(2);
    for (int i = 0; i < 10; ++i) CHECK(model.occupancy(sample_in(model.config().box, pr)) == 0.5);
}

TEST_CASE("zeroed flow decoder predicts zero flow") {
    Rng rng(3);
    ImplicitModel model(small_config(), rng);
    zero_mlp(model.flow_decoder());
    field::FeatureField dyn = unit_dynamics(model.config(), rng);
    Rng pr(4);
    for (int i = 0; i < 5; ++i)
        CHECK(model.flow(dyn, sample_in(model.config().box, pr)).norm() == 0.0);
}

TEST_CASE("embedding has the configured width and is deterministic") {
    Rng rng(5);
    ImplicitModel model(small_config(), rng);
    Vec3 p(0.1, -0.2, 0.4);
    Vector a = model.embed(p), b = model.embed(p);
    CHECK(a.size() == 5);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flow with fixed parameters is deterministic across calls") {
    Rng rng(6);
    ImplicitModel model(small_config(), rng);
    field::FeatureField dyn = unit_dynamics(model.config(), rng);
    Vec3 p(0.05, 0.2, 0.7);
    Vec3 a = model.flow(dyn, p), b = model.flow(dyn, p);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("frozen geometry features reproduce the fused flow at the freeze point") {
    Rng rng(21);
    ImplicitModel model(small_config(), rng);
    field::FeatureField dyn = unit_dynamics(model.config(), rng);
    Vec3 p(0.12, -0.07, 0.33), q(-0.2, 0.3, 0.6);

    ImplicitModel::FrozenFeatures at_p = model.freeze(p);
    CHECK((model.flow_frozen(dyn, p, at_p) - model.flow(dyn, p)).cwiseAbs().maxCoeff() == 0.0);

    // carried to another point the frozen inputs keep their values: rebuilding
    // the evaluation by hand from the occupancy pass at p agrees bitwise
    Vec3 carried = model.flow_frozen(dyn, q, at_p);
    Vec3 fresh = model.flow(dyn, q);
    CHECK((model.flow_frozen(dyn, q, at_p) - carried).cwiseAbs().maxCoeff() == 0.0);
    CHECK((carried - fresh).cwiseAbs().maxCoeff() > 0.0);

    ImplicitModel::FrozenFeatures bad = at_p;
    bad.extras.pop_back();
    CHECK_THROWS_AS(model.flow_frozen(dyn, q, bad), ValidationError);

    Rng rng2(21);
    ImplicitModel plain(small_config(false), rng2);
    CHECK((plain.flow_frozen(dyn, q, plain.freeze(p)) - plain.flow(dyn, q))
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("action features pair grasp offset with the release point") {
    sim::Action act;
    act.p_g = Vec3(0.2, 0.1, 0.3);
    act.p_r = Vec3(-0.4, 0.0, 0.5);
    std::vector<Vec3> pts = {act.p_g, Vec3(0.0, 0.0, 0.0), Vec3(1.0, 2.0, 3.0)};
    auto feats = action_features(pts, act);
    REQUIRE(feats.size() == 3);
    CHECK(feats[0].head<3>().norm() == 0.0);  // p_i == p_g
    for (const auto& f : feats) {
        CHECK(f.size() == kActionFeatureDim);
        CHECK((f.tail<3>() - act.p_r).cwiseAbs().maxCoeff() == 0.0);
    }

    // translating points and grasp together leaves the offset unchanged
    Vec3 t(0.7, -0.3, 0.2);
    sim::Action moved{act.p_g + t, act.p_r};
    std::vector<Vec3> shifted;
    for (const auto& p : pts) shifted.push_back(p + t);
    auto feats2 = action_features(shifted, moved);
    for (size_t i = 0; i < pts.size(); ++i)
        CHECK((feats2[i].head<3>() - feats[i].head<3>()).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS_AS(action_features({}, act), ValidationError);
}

TEST_CASE("dynamics field scatter places action features at observed points") {
    ModelConfig c = small_config();
    // res 3 over a unit box puts lattice nodes at half steps
    Vec3 node(0.0, 0.0, 0.5);
    sim::Action act;
    act.p_g = Vec3(0.25, 0.0, 0.5);
    act.p_r = Vec3(0.0, -0.25, 0.75);
    field::FeatureField dyn = build_dynamics_field({node}, act, c);
    CHECK_FALSE(dyn.from_empty_scatter());
    Vector expected(kActionFeatureDim);
    expected.head<3>() = act.p_g - node;
    expected.tail<3>() = act.p_r;
    // each of the three planes holds the pooled feature, so a query sums it thrice
    CHECK((dyn.query(node) - 3.0 * expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("state extraction thresholds occupancy and flags empty results") {
    Rng rng(7);
    ImplicitModel model(small_config(), rng);
    zero_mlp(model.occupancy_decoder());  // probability one half everywhere
    auto grid = grid_candidates(model.config().box, 4);
    ExtractedState s = extract_state(model, grid, 0.75);
    CHECK(s.empty());

    CHECK_THROWS_AS(extract_state(model, grid, 0.0), ValidationError);
    CHECK_THROWS_AS(extract_state(model, grid, 1.0), ValidationError);
}

TEST_CASE("raising the threshold never adds extracted points") {
    Rng rng(8);
    ImplicitModel model(small_config(), rng);
    model.occupancy_decoder().biases.back()(0) = 2.0;  // lift probabilities past 0.75
    auto grid = grid_candidates(model.config().box, 5);
    ExtractedState low = extract_state(model, grid, 0.75);
    ExtractedState high = extract_state(model, grid, 0.95);
    REQUIRE_FALSE(low.empty());

    auto contains = [](const std::vector<Vec3>& pts, const Vec3& q) {
        return std::any_of(pts.begin(), pts.end(),
                           [&](const Vec3& p) { return (p - q).norm() == 0.0; });
    };
    for (const Vec3& p : high.points) CHECK(contains(low.points, p));
    CHECK(high.points.size() <= low.points.size());
}

TEST_CASE("grid candidates span the box corners") {
    Aabb box{Vec3(-1.0, 0.0, 2.0), Vec3(1.0, 4.0, 3.0)};
    auto pts = grid_candidates(box, 3);
    REQUIRE(pts.size() == 27);
    CHECK((pts.front() - box.lo).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pts.back() - box.hi).cwiseAbs().maxCoeff() == 0.0);
    for (const Vec3& p : pts) CHECK(box.inflated(1.0 + 1e-12).contains(p));
    CHECK_THROWS_AS(grid_candidates(box, 1), ValidationError);
}

TEST_CASE("occupancy gradients match finite differences end to end") {
    Rng rng(9);
    ImplicitModel model(small_config(), rng);
    Rng pr(10);
    Vec3 p;
    ImplicitModel::OccEval eval;
    for (int attempt = 0;; ++attempt) {
        REQUIRE(attempt < 50);
        p = sample_in(model.config().box, pr);
        eval = model.occupancy_eval(p);
        if (min_pre_margin(model.occupancy_decoder(), eval.cache) > 1e-3) break;
    }
    model.zero_grad();
    model.occupancy_backward(p, eval, 1.0);

    const double h = 1e-5;
    for (nn::ParamView view : model.params())
        for (size_t k = 0; k < view.size; ++k) {
            double saved = view.value[k];
            view.value[k] = saved + h;
            double up = model.occupancy(p);
            view.value[k] = saved - h;
            double down = model.occupancy(p);
            view.value[k] = saved;
            CHECK(grad_close(view.grad[k], (up - down) / (2.0 * h)));
        }
}

TEST_CASE("embedding gradients match finite differences end to end") {
    Rng rng(11);
    ImplicitModel model(small_config(), rng);
    Rng pr(12);
    Vec3 p;
    ImplicitModel::EmbedEval eval;
    for (int attempt = 0;; ++attempt) {
        REQUIRE(attempt < 50);
        p = sample_in(model.config().box, pr);
        eval = model.embed_eval(p);
        if (min_pre_margin(model.embedding_decoder(), eval.cache) > 1e-3) break;
    }
    Vector probe(5);
    probe << 0.3, -1.1, 0.7, 0.2, -0.5;
    model.zero_grad();
    model.embed_backward(p, eval, probe);

    const double h = 1e-5;
    for (nn::ParamView view : model.params())
        for (size_t k = 0; k < view.size; ++k) {
            double saved = view.value[k];
            view.value[k] = saved + h;
            double up = probe.dot(model.embed(p));
            view.value[k] = saved - h;
            double down = probe.dot(model.embed(p));
            view.value[k] = saved;
            CHECK(grad_close(view.grad[k], (up - down) / (2.0 * h)));
        }
}

TEST_CASE("fused flow gradients match finite differences through every path") {
    Rng rng(13);
    ImplicitModel model(small_config(), rng);
    field::FeatureField dyn = unit_dynamics(model.config(), rng);
    Rng pr(14);
    Vec3 p;
    ImplicitModel::FlowEval eval;
    for (int attempt = 0;; ++attempt) {
        REQUIRE(attempt < 50);
        p = sample_in(model.config().box, pr);
        eval = model.flow_eval(dyn, p);
        if (min_pre_margin(model.flow_decoder(), eval.cache) > 1e-3 &&
            min_pre_margin(model.occupancy_decoder(), eval.occ.cache) > 1e-3)
            break;
    }
    Vec3 probe(0.8, -0.6, 1.2);
    model.zero_grad();
    model.flow_backward(p, eval, probe);

    const double h = 1e-5;
    for (nn::ParamView view : model.params())
        for (size_t k = 0; k < view.size; ++k) {
            double saved = view.value[k];
            view.value[k] = saved + h;
            double up = probe.dot(model.flow(dyn, p));
            view.value[k] = saved - h;
            double down = probe.dot(model.flow(dyn, p));
            view.value[k] = saved;
            CHECK(grad_close(view.grad[k], (up - down) / (2.0 * h)));
        }
}

TEST_CASE("without fusion the flow head never touches the occupancy decoder") {
    Rng rng(15);
    ImplicitModel model(small_config(false), rng);
    CHECK(model.flow_decoder().config().input_dim == 3 + kActionFeatureDim);

    field::FeatureField dyn = unit_dynamics(model.config(), rng);
    Vec3 p(0.1, 0.1, 0.5);
    auto eval = model.flow_eval(dyn, p);
    model.zero_grad();
    model.flow_backward(p, eval, Vec3(1.0, 1.0, 1.0));
    for (const auto& G : model.occupancy_decoder().grad_weights)
        CHECK(G.cwiseAbs().maxCoeff() == 0.0);
    for (int k = 0; k < 3; ++k) {
        auto views = model.geometry().params();
        for (nn::ParamView v : views)
            for (size_t i = 0; i < v.size; ++i) CHECK(v.grad[i] == 0.0);
    }
}

TEST_CASE("fusion with a single layer is rejected at construction") {
    ModelConfig c = small_config();
    c.depth = 1;
    Rng rng(16);
    CHECK_THROWS_AS(ImplicitModel(c, rng), ValidationError);
}

TEST_CASE("flow rejects a dynamics field of the wrong width") {
    Rng rng(17);
    ImplicitModel model(small_config(), rng);
    field::FieldDims d = model.config().geometry_dims();  // width 4, not 6
    field::FeatureField bad(d);
    CHECK_THROWS_AS(model.flow(bad, Vec3(0, 0, 0.5)), ValidationError);
}

TEST_CASE("checkpoint round-trip reproduces all three heads bitwise") {
    namespace fs = std::filesystem;
    Rng rng(18);
    ImplicitModel model(small_config(), rng);
    field::FeatureField dyn = unit_dynamics(model.config(), rng);
    fs::path path = fs::temp_directory_path() / "defo_model_roundtrip.json";
    model.save(path.string());
    ImplicitModel back = ImplicitModel::load(path.string());
    CHECK(back.config().hash() == model.config().hash());

    Rng pr(19);
    for (int i = 0; i < 5; ++i) {
        Vec3 p = sample_in(model.config().box, pr);
        CHECK(back.occupancy(p) == model.occupancy(p));
        CHECK((back.embed(p) - model.embed(p)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.flow(dyn, p) - model.flow(dyn, p)).cwiseAbs().maxCoeff() == 0.0);
    }
    fs::remove(path);
}

TEST_CASE("checkpoint with a tampered config hash is rejected") {
    namespace fs = std::filesystem;
    Rng rng(20);
    ImplicitModel model(small_config(), rng);
    fs::path path = fs::temp_directory_path() / "defo_model_tampered.json";
    model.save(path.string());

    nlohmann::json j;
    {
        std::ifstream in(path);
        in >> j;
    }
    j["config_hash"] = "0000000000000000";
    {
        std::ofstream out(path);
        out << j.dump();
    }
    CHECK_THROWS_WITH_AS(ImplicitModel::load(path.string()),
                         doctest::Contains("config hash mismatch"), std::runtime_error);
    fs::remove(path);
}

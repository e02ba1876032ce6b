#include "defo/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace defo::train {
namespace {

// Shared hinge so the geodesic loss's positive branch is bit-identical to the
// fixed-margin loss. The gradient at D = 0 on an open negative hinge is left
// at zero (any subgradient is valid there).
double pair_loss(const nn::Vector& f_p, const nn::Vector& f_q, bool positive, double neg_margin,
                 double m_pos, nn::Vector* dfp, nn::Vector* dfq) {
    if (f_p.size() != f_q.size())
        throw ValidationError("contrastive loss: feature dimensions differ");
    nn::Vector diff = f_p - f_q;
    double D = diff.norm();
    double hinge = positive ? std::max(D - m_pos, 0.0) : std::max(neg_margin - D, 0.0);
    if ((dfp || dfq) && hinge > 0.0 && D > 0.0) {
        double scale = (positive ? 2.0 : -2.0) * hinge / D;
        if (dfp) *dfp += scale * diff;
        if (dfq) *dfq -= scale * diff;
    }
    return hinge * hinge;
}

}  // namespace

void ContrastiveConfig::validate() const {
    std::vector<std::string> bad;
    if (!(m_pos >= 0.0)) bad.push_back("m_pos must be nonnegative");
    if (!(m_pos < m_neg)) bad.push_back("m_pos must be below m_neg");
    if (!(d_thres > 0.0)) bad.push_back("d_thres must be positive");
    if (!bad.empty()) throw ValidationError("contrastive config", bad);
}

double loss_contrastive_euclid(const nn::Vector& f_p, const nn::Vector& f_q, bool is_match,
                               const ContrastiveConfig& cfg, nn::Vector* dfp, nn::Vector* dfq) {
    cfg.validate();
    return pair_loss(f_p, f_q, is_match, cfg.m_neg, cfg.m_pos, dfp, dfq);
}

double loss_contrastive_geo(const nn::Vector& f_p, const nn::Vector& f_q, double d_O,
                            const ContrastiveConfig& cfg, nn::Vector* dfp, nn::Vector* dfq) {
    cfg.validate();
    if (!(d_O >= 0.0)) throw ValidationError("geodesic distance must be nonnegative");
    bool positive = d_O < cfg.d_thres;
    double margin = positive ? 0.0 : std::log(d_O / cfg.d_thres) + cfg.m_neg;
    return pair_loss(f_p, f_q, positive, margin, cfg.m_pos, dfp, dfq);
}

PairBatch sample_pairs(const sim::ActionRecord& rec, const tetmesh::TetMesh& mesh,
                       const tetmesh::GeodesicTable& table, const ContrastiveConfig& cfg,
                       int n_pos, int n_neg, Rng& rng) {
    cfg.validate();
    if (n_pos < 0 || n_neg < 0) throw ValidationError("pair counts must be nonnegative");
    int nv = mesh.num_vertices();
    if (static_cast<int>(rec.pre.size()) != nv ||
        static_cast<int>(rec.post.size()) != nv)
        throw ValidationError("record states do not match the mesh vertex count");

    // vertex-level geodesic: table lookup between lowest incident tets, the
    // same convention point location uses
    auto vgeo = [&](int i, int j) { return table.dist(mesh.vertex_tet[i], mesh.vertex_tet[j]); };

    PairBatch batch;
    batch.d_thres = cfg.d_thres;
    batch.pairs.reserve(static_cast<size_t>(n_pos + n_neg));
    for (int k = 0; k < n_pos; ++k) {
        int i = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(nv)));
        PairSample s;
        s.vertex_p = s.vertex_q = i;
        s.p = rec.pre[static_cast<size_t>(i)];
        s.q = rec.post[static_cast<size_t>(i)];
        s.positive = true;  // same material point: d_geo = 0 < d_thres
        batch.pairs.push_back(s);
    }
    uint64_t attempts = 0, cap = 200ull * static_cast<uint64_t>(std::max(n_neg, 1));
    for (int k = 0; k < n_neg;) {
        if (++attempts > cap)
            throw ValidationError(
                "could not sample negative pairs with geodesic >= " + format_double(cfg.d_thres) +
                "; the mesh is too small for this d_thres, choose a smaller threshold");
        int i = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(nv)));
        int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(nv)));
        double d = vgeo(i, j);
        if (d < cfg.d_thres) continue;
        PairSample s;
        s.vertex_p = i;
        s.vertex_q = j;
        s.p = rec.pre[static_cast<size_t>(i)];
        s.q = rec.post[static_cast<size_t>(j)];
        s.d_geo = d;
        s.d_rest_euclid = (mesh.vertices[static_cast<size_t>(i)] -
                           mesh.vertices[static_cast<size_t>(j)])
                              .norm();
        s.positive = false;
        batch.pairs.push_back(s);
        ++k;
    }
    return batch;
}

std::vector<QueryPoint> sample_query_points(const std::vector<Vec3>& positions,
                                            const tetmesh::TetMesh& mesh, Rng& rng, int n) {
    if (n < 0) throw ValidationError("sample count must be nonnegative");
    if (static_cast<int>(positions.size()) != mesh.num_vertices())
        throw ValidationError("positions do not match the mesh vertex count");
    std::vector<QueryPoint> out;
    if (n == 0) return out;
    Vec3 com = Vec3::Zero();
    for (const Vec3& p : positions) com += p;
    com /= static_cast<double>(positions.size());
    Vec3 dev = 0.25 * Aabb::of(positions).extent();  // half the half-extent
    out.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        QueryPoint q;
        for (int a = 0; a < 3; ++a) q.p[a] = com[a] + dev[a] * rng.normal();
        q.inside = tetmesh::contains_tet(mesh, positions, q.p).has_value();
        out.push_back(q);
    }
    return out;
}

std::string to_string(CorrMode mode) {
    switch (mode) {
        case CorrMode::Geodesic: return "geodesic";
        case CorrMode::Euclid: return "euclid";
        case CorrMode::None: return "none";
    }
    throw ValidationError("unknown correspondence mode");
}

CorrMode corr_mode_from_string(const std::string& s) {
    if (s == "geodesic") return CorrMode::Geodesic;
    if (s == "euclid") return CorrMode::Euclid;
    if (s == "none") return CorrMode::None;
    throw ValidationError("correspondence mode must be geodesic, euclid, or none; got \"" + s +
                          "\"");
}

std::string TrainConfig::hash() const {
    ConfigHasher h;
    h.add("steps", steps)
        .add("query_batch", query_batch)
        .add("pair_batch", pair_batch)
        .add("val_every", val_every)
        .add("lr", lr)
        .add("weight_decay", weight_decay)
        .add("w_occ", w_occ)
        .add("w_flow", w_flow)
        .add("w_corr", w_corr)
        .add("corr", train::to_string(corr))
        .add("m_pos", contrastive.m_pos)
        .add("m_neg", contrastive.m_neg)
        .add("d_thres", contrastive.d_thres)
        .add("seed", seed);
    return h.hex();
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open training config: " + path);
    TrainConfig tc;
    std::vector<std::string> bad;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = "line " + std::to_string(lineno) + ": ";
        size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        auto not_space = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), not_space));
        line.erase(std::find_if(line.rbegin(), line.rend(), not_space).base(), line.end());
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            bad.push_back(where + "expected key=value, got \"" + line + "\"");
            continue;
        }
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        try {
            size_t used = 0;
            if (key == "steps") tc.steps = std::stoi(value, &used);
            else if (key == "query_batch") tc.query_batch = std::stoi(value, &used);
            else if (key == "pair_batch") tc.pair_batch = std::stoi(value, &used);
            else if (key == "val_every") tc.val_every = std::stoi(value, &used);
            else if (key == "lr") tc.lr = std::stod(value, &used);
            else if (key == "weight_decay") tc.weight_decay = std::stod(value, &used);
            else if (key == "w_occ") tc.w_occ = std::stod(value, &used);
            else if (key == "w_flow") tc.w_flow = std::stod(value, &used);
            else if (key == "w_corr") tc.w_corr = std::stod(value, &used);
            else if (key == "m_pos") tc.contrastive.m_pos = std::stod(value, &used);
            else if (key == "m_neg") tc.contrastive.m_neg = std::stod(value, &used);
            else if (key == "d_thres") tc.contrastive.d_thres = std::stod(value, &used);
            else if (key == "seed") tc.seed = std::stoull(value, &used);
            else if (key == "corr") {
                tc.corr = corr_mode_from_string(value);
                used = value.size();
            } else {
                bad.push_back(where + "unknown key \"" + key + "\"");
                continue;
            }
            if (used != value.size())
                bad.push_back(where + "trailing characters in value \"" + value + "\"");
        } catch (const ValidationError& e) {
            bad.push_back(where + e.what());
        } catch (const std::exception&) {
            bad.push_back(where + "cannot parse value \"" + value + "\" for key \"" + key + "\"");
        }
    }
    if (!bad.empty()) throw ValidationError("training config " + path, bad);
    return tc;
}

void TrainConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write training config: " + path);
    out << "steps=" << steps << '\n';
    out << "query_batch=" << query_batch << '\n';
    out << "pair_batch=" << pair_batch << '\n';
    out << "val_every=" << val_every << '\n';
    out << "lr=" << format_double(lr) << '\n';
    out << "weight_decay=" << format_double(weight_decay) << '\n';
    out << "w_occ=" << format_double(w_occ) << '\n';
    out << "w_flow=" << format_double(w_flow) << '\n';
    out << "w_corr=" << format_double(w_corr) << '\n';
    out << "corr=" << train::to_string(corr) << '\n';
    out << "m_pos=" << format_double(contrastive.m_pos) << '\n';
    out << "m_neg=" << format_double(contrastive.m_neg) << '\n';
    out << "d_thres=" << format_double(contrastive.d_thres) << '\n';
    out << "seed=" << seed << '\n';
}

namespace {

void validate_train_config(const TrainConfig& tc) {
    std::vector<std::string> bad;
    if (tc.steps < 1) bad.push_back("steps must be positive");
    if (tc.query_batch < 1) bad.push_back("query_batch must be positive");
    if (tc.pair_batch < 1) bad.push_back("pair_batch must be positive");
    if (tc.val_every < 1) bad.push_back("val_every must be positive");
    if (!(tc.lr > 0.0)) bad.push_back("lr must be positive");
    if (!(tc.weight_decay >= 0.0)) bad.push_back("weight_decay must be nonnegative");
    if (!(tc.w_occ >= 0.0 && tc.w_flow >= 0.0 && tc.w_corr >= 0.0))
        bad.push_back("loss weights must be nonnegative");
    if (!bad.empty()) throw ValidationError("train config", bad);
}

double validation_flow_mse(const heads::ImplicitModel& model, const heads::ModelConfig& mc,
                           const std::vector<const sim::ActionRecord*>& records) {
    double total = 0.0;
    size_t count = 0;
    for (const sim::ActionRecord* rec : records) {
        field::FeatureField dyn =
            heads::build_dynamics_field(rec->observation.points, rec->action, mc);
        for (size_t i = 0; i < rec->pre.size(); ++i) {
            total += (model.flow(dyn, rec->pre[i]) - rec->flow[i]).squaredNorm();
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace

TrainResult train(const Dataset& data, const heads::ModelConfig& mc, const TrainConfig& tc) {
    validate_train_config(tc);
    std::string mesh_id = tetmesh::mesh_content_id(data.mesh);
    std::vector<std::string> bad;
    std::vector<const sim::ActionRecord*> records;
    for (size_t t = 0; t < data.trajectories.size(); ++t) {
        if (data.trajectories[t].mesh_id != mesh_id)
            bad.push_back("trajectory " + std::to_string(t) + ": mesh id " +
                          data.trajectories[t].mesh_id + " does not match the dataset mesh");
        for (const auto& rec : data.trajectories[t].records) records.push_back(&rec);
    }
    if (!bad.empty()) throw ValidationError("train dataset", bad);
    if (records.empty()) throw ValidationError("train dataset has no action records");

    // every fifth record validates; tiny datasets validate on what they train on
    std::vector<const sim::ActionRecord*> train_recs, val_recs;
    for (size_t i = 0; i < records.size(); ++i)
        (i % 5 == 4 ? val_recs : train_recs).push_back(records[i]);
    if (val_recs.empty()) val_recs = train_recs;

    ContrastiveConfig cc = tc.contrastive;
    if (cc.d_thres <= 0.0) cc.d_thres = 0.1 * data.table.diameter();
    cc.validate();

    Rng root(tc.seed);
    Rng init_rng = root.child(0), pick_rng = root.child(1), occ_rng = root.child(2),
        pair_rng = root.child(3);
    heads::ImplicitModel model(mc, init_rng);
    nn::AdamConfig ac;
    ac.lr = tc.lr;
    ac.weight_decay = tc.weight_decay;
    nn::AdamW opt(ac);
    opt.attach(model.params());

    TrainResult res(model);
    res.d_thres = cc.d_thres;
    res.config_hash = tc.hash();
    res.best_val = validation_flow_mse(model, mc, val_recs);
    res.best_step = -1;  // initialization, before any update
    res.val_curve.emplace_back(-1, res.best_val);

    int n_pos = tc.pair_batch / 2, n_neg = tc.pair_batch - tc.pair_batch / 2;
    const double prob_floor = 1e-12;  // keeps the cross-entropy logs finite

    for (int step = 0; step < tc.steps; ++step) {
        const sim::ActionRecord& rec =
            *train_recs[pick_rng.uniform_int(static_cast<uint64_t>(train_recs.size()))];
        opt.zero_grad();
        StepLog log;
        log.step = step;

        auto queries = sample_query_points(rec.pre, data.mesh, occ_rng, tc.query_batch);
        for (const QueryPoint& q : queries) {
            auto eval = model.occupancy_eval(q.p);
            double y = std::clamp(eval.prob, prob_floor, 1.0 - prob_floor);
            double t = q.inside ? 1.0 : 0.0;
            log.occ += -(t * std::log(y) + (1.0 - t) * std::log(1.0 - y));
            double dprob = (y - t) / (y * (1.0 - y));  // d(BCE)/dprob
            model.occupancy_backward(q.p, eval,
                                     tc.w_occ * dprob / static_cast<double>(queries.size()));
        }
        log.occ /= static_cast<double>(queries.size());

        field::FeatureField dyn =
            heads::build_dynamics_field(rec.observation.points, rec.action, mc);
        size_t nv = rec.pre.size();
        for (size_t i = 0; i < nv; ++i) {
            auto eval = model.flow_eval(dyn, rec.pre[i]);
            Vec3 err = eval.y - rec.flow[i];
            log.flow += err.squaredNorm();
            model.flow_backward(rec.pre[i], eval,
                                tc.w_flow * 2.0 / static_cast<double>(nv) * err);
        }
        log.flow /= static_cast<double>(nv);

        if (tc.corr != CorrMode::None) {
            PairBatch batch = sample_pairs(rec, data.mesh, data.table, cc, n_pos, n_neg, pair_rng);
            double inv = 1.0 / static_cast<double>(batch.pairs.size());
            for (const PairSample& s : batch.pairs) {
                auto ep = model.embed_eval(s.p);
                auto eq = model.embed_eval(s.q);
                nn::Vector dfp = nn::Vector::Zero(ep.f.size());
                nn::Vector dfq = nn::Vector::Zero(eq.f.size());
                log.corr += tc.corr == CorrMode::Geodesic
                                ? loss_contrastive_geo(ep.f, eq.f, s.d_geo, cc, &dfp, &dfq)
                                : loss_contrastive_euclid(ep.f, eq.f,
                                                          s.d_rest_euclid < cc.d_thres, cc, &dfp,
                                                          &dfq);
                model.embed_backward(s.p, ep, tc.w_corr * inv * dfp);
                model.embed_backward(s.q, eq, tc.w_corr * inv * dfq);
            }
            log.corr *= inv;
        }

        log.total = tc.w_occ * log.occ + tc.w_flow * log.flow + tc.w_corr * log.corr;
        res.curve.push_back(log);
        if (!std::isfinite(log.total)) {
            res.diverged = true;
            break;
        }
        opt.step();

        if ((step + 1) % tc.val_every == 0 || step + 1 == tc.steps) {
            double val = validation_flow_mse(model, mc, val_recs);
            res.val_curve.emplace_back(step, val);
            // selection targets the dynamics loss; with the flow head untrained
            // that signal is meaningless, so the latest checkpoint wins instead
            bool better = tc.w_flow > 0.0 ? val < res.best_val : true;
            if (std::isfinite(val) && better) {
                res.best_val = val;
                res.best_step = step;
                res.model = model;
            }
        }
    }
    return res;
}

void save_curves(const TrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write loss curves: " + path);
    out << "# " << kToolVersion << "\n# config " << result.config_hash << '\n';
    out << "step,occupancy,flow,correspondence,total,validation\n";
    size_t vi = 0;
    while (vi < result.val_curve.size() && result.val_curve[vi].first < 0) ++vi;  // init row
    for (const StepLog& log : result.curve) {
        out << log.step << ',' << format_double(log.occ) << ',' << format_double(log.flow) << ','
            << format_double(log.corr) << ',' << format_double(log.total) << ',';
        if (vi < result.val_curve.size() && result.val_curve[vi].first == log.step) {
            out << format_double(result.val_curve[vi].second);
            ++vi;
        }
        out << '\n';
    }
}

}  // namespace defo::train

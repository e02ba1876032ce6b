#include "defo/losses.hpp"
#include "defo/meshgen.hpp"
#include "defo/metrics.hpp"
#include "defo/planner.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace defo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_csv_preamble(std::ostream& out, const std::string& config_hash) {
    out << "# " << kToolVersion << "\n# config " << config_hash << '\n';
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write: " + path);
    return out;
}

json jvec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

corr::Correspondence identity_map(int n) {
    corr::Correspondence xi;
    for (int i = 0; i < n; ++i) xi.target.push_back(i);
    return xi;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    int n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            s += x;
            ++n;
        }
    return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN();
}

/// Caps Eigen's internal parallelism from DEFO_THREADS when set.
void apply_thread_env() {
    const char* env = std::getenv("DEFO_THREADS");
    if (!env) return;
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n <= 0 || n > 1024)
        throw ValidationError(std::string("DEFO_THREADS must be a positive integer, got \"") +
                              env + "\"");
    Eigen::setNbThreads(static_cast<int>(n));
}

// ---------------------------------------------------------------- mesh

struct MeshArgs {
    std::string shape = "box";
    std::string out;
    bool list = false;
};

int cmd_mesh(const MeshArgs& a) {
    if (a.list) {
        for (const std::string& name : tetmesh::named_shapes()) std::cout << name << '\n';
        return 0;
    }
    if (a.out.empty()) throw ValidationError("mesh: --out is required");
    tetmesh::TetMesh mesh = tetmesh::make_named_shape(a.shape);
    tetmesh::save_mesh(mesh, a.out);
    std::cout << "wrote " << a.out << ": " << a.shape << ", " << mesh.num_vertices()
              << " vertices, " << mesh.num_tets() << " tets, id " << tetmesh::mesh_content_id(mesh)
              << '\n';
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string mesh;
    std::string out;
    int actions = 20;
    uint64_t seed = 0;
    int reset_period = 15;
};

int cmd_simulate(const SimulateArgs& a) {
    tetmesh::TetMesh mesh = tetmesh::load_mesh(a.mesh);
    sim::Simulator simulator(mesh);
    sim::Trajectory traj = simulator.simulate(a.actions, a.seed, a.reset_period);
    sim::save_trajectory(traj, a.out);
    std::cout << "wrote " << a.out << ": " << traj.records.size() << " records, mesh "
              << traj.mesh_id << ", config " << traj.config_hash << '\n';
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string mesh;
    std::vector<std::string> trajs;
    std::string out_model;
    std::string out_curves;
    std::string config_file;
    std::string corr = "geodesic";
    train::TrainConfig tc;
    int field_res = 24;
    int geometry_dim = 16;
    int embed_dim = 16;
    int hidden_dim = 32;
    int depth = 3;
    bool no_fusion = false;
    double box_inflate = 1.5;
    CLI::App* sub = nullptr;
};

int cmd_train(const TrainArgs& a) {
    train::TrainConfig tc;
    if (!a.config_file.empty()) tc = train::TrainConfig::from_file(a.config_file);
    auto passed = [&](const char* flag) { return a.sub->count(flag) > 0; };
    if (passed("--steps")) tc.steps = a.tc.steps;
    if (passed("--seed")) tc.seed = a.tc.seed;
    if (passed("--lr")) tc.lr = a.tc.lr;
    if (passed("--query-batch")) tc.query_batch = a.tc.query_batch;
    if (passed("--pair-batch")) tc.pair_batch = a.tc.pair_batch;
    if (passed("--val-every")) tc.val_every = a.tc.val_every;
    if (passed("--w-occ")) tc.w_occ = a.tc.w_occ;
    if (passed("--w-flow")) tc.w_flow = a.tc.w_flow;
    if (passed("--w-corr")) tc.w_corr = a.tc.w_corr;
    if (passed("--d-thres")) tc.contrastive.d_thres = a.tc.contrastive.d_thres;
    if (passed("--corr") || a.config_file.empty()) tc.corr = train::corr_mode_from_string(a.corr);

    train::Dataset data;
    data.mesh = tetmesh::load_mesh(a.mesh);
    data.table = tetmesh::geodesic_table(data.mesh);
    Aabb box;
    for (const std::string& path : a.trajs) {
        data.trajectories.push_back(sim::load_trajectory(path));
        for (const sim::ActionRecord& rec : data.trajectories.back().records) {
            box.expand(Aabb::of(rec.pre));
            box.expand(Aabb::of(rec.post));
        }
    }
    if (!box.valid()) throw ValidationError("train: no records in the given trajectories");

    heads::ModelConfig mc;
    mc.box = box.inflated(a.box_inflate);
    mc.box.lo.z() = std::min(mc.box.lo.z(), -0.05);
    mc.field_res = a.field_res;
    mc.geometry_dim = a.geometry_dim;
    mc.embed_dim = a.embed_dim;
    mc.hidden_dim = a.hidden_dim;
    mc.depth = a.depth;
    mc.skip_layers = a.depth > 2 ? std::vector<int>{2} : std::vector<int>{};
    mc.fusion = !a.no_fusion;

    train::TrainResult res = train::train(data, mc, tc);
    res.model.save(a.out_model);
    if (!a.out_curves.empty()) train::save_curves(res, a.out_curves);
    std::cout << "wrote " << a.out_model << ": config " << res.config_hash << ", best step "
              << res.best_step << ", validation " << format_double(res.best_val) << ", d_thres "
              << format_double(res.d_thres) << '\n';
    if (res.diverged) {
        std::cerr << "error: training diverged; the checkpoint holds the last finite state\n";
        return 3;
    }
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string mesh;
    std::string model;
    std::string traj;
    std::string out;
    double tau1 = corr::MatchThresholds::desk().tau1;
    double tau2 = corr::MatchThresholds::desk().tau2;
    double radius = corr::MatchThresholds::desk().accuracy_radius;
    int miou_samples = 2000;
    uint64_t miou_seed = 0;
};

struct RecordMetrics {
    double flow_mse = 0.0;
    corr::PairQuality quality;
    double miou = std::numeric_limits<double>::quiet_NaN();
    double predicted_cost = 0.0;
    double actual_cost = 0.0;
};

int cmd_evaluate(const EvaluateArgs& a) {
    tetmesh::TetMesh mesh = tetmesh::load_mesh(a.mesh);
    heads::ImplicitModel model = heads::ImplicitModel::load(a.model);
    sim::Trajectory traj = sim::load_trajectory(a.traj);
    if (traj.mesh_id != tetmesh::mesh_content_id(mesh))
        throw ValidationError("evaluate: trajectory mesh " + traj.mesh_id +
                              " does not match the given mesh");
    if (traj.records.empty()) throw ValidationError("evaluate: trajectory has no records");
    corr::MatchThresholds thr{a.tau1, a.tau2, a.radius};
    thr.validate();

    const int n = mesh.num_vertices();
    corr::Correspondence id = identity_map(n);
    const std::vector<Vec3>& final_post = traj.records.back().post;
    Rng miou_root(a.miou_seed);

    std::vector<RecordMetrics> rows;
    for (size_t r = 0; r < traj.records.size(); ++r) {
        const sim::ActionRecord& rec = traj.records[r];
        RecordMetrics row;
        try {
            field::FeatureField dyn =
                heads::build_dynamics_field(rec.observation.points, rec.action, model.config());
            std::vector<Vec3> pred_flow(rec.pre.size());
            std::vector<Vec3> pred_post(rec.pre.size());
            for (size_t i = 0; i < rec.pre.size(); ++i) {
                pred_flow[i] = model.flow(dyn, rec.pre[i]);
                pred_post[i] = rec.pre[i] + pred_flow[i];
            }
            row.flow_mse = metrics::flow_mse(pred_flow, rec.flow);

            std::vector<nn::Vector> f_src(rec.pre.size()), f_tgt(rec.post.size());
            for (size_t i = 0; i < rec.pre.size(); ++i) f_src[i] = model.embed(rec.pre[i]);
            for (size_t i = 0; i < rec.post.size(); ++i) f_tgt[i] = model.embed(rec.post[i]);
            row.quality = corr::pair_quality(corr::match(f_src, f_tgt), id, rec.post, thr);

            if (a.miou_samples > 0) {
                Aabb box = Aabb::of(rec.post).inflated(1.5);
                Rng mrng = miou_root.child(r);
                metrics::MiouResult g = metrics::miou(
                    [&](const Vec3& p) { return model.occupancy(p) > 0.75; },
                    [&](const Vec3& p) {
                        return tetmesh::contains_tet(mesh, rec.post, p).has_value();
                    },
                    box, a.miou_samples, mrng);
                row.miou = g.value;
            }
            row.predicted_cost = corr::d_corr(pred_post, final_post, id);
            row.actual_cost = corr::d_corr(rec.post, final_post, id);
        } catch (const ValidationError& e) {
            throw ValidationError("evaluate: record " + std::to_string(r) + ": " + e.what());
        }
        rows.push_back(row);
    }

    std::ofstream out = open_out(a.out);
    write_csv_preamble(out, model.config().hash());
    out << "# mesh " << traj.mesh_id << '\n';
    out << "record,flow_mse,inlier_fraction,recovered,accuracy,miou,predicted_cost,actual_cost\n";
    std::vector<double> fmses, accs, mious, pred_costs, actual_costs;
    std::vector<corr::PairQuality> qualities;
    for (size_t r = 0; r < rows.size(); ++r) {
        const RecordMetrics& row = rows[r];
        out << r << ',' << format_double(row.flow_mse) << ','
            << format_double(row.quality.inlier_fraction) << ',' << (row.quality.recovered ? 1 : 0)
            << ',' << format_double(row.quality.accuracy) << ',' << format_double(row.miou) << ','
            << format_double(row.predicted_cost) << ',' << format_double(row.actual_cost) << '\n';
        fmses.push_back(row.flow_mse);
        qualities.push_back(row.quality);
        accs.push_back(row.quality.accuracy);
        mious.push_back(row.miou);
        pred_costs.push_back(row.predicted_cost);
        actual_costs.push_back(row.actual_cost);
    }
    double tau = rows.size() >= 2 ? metrics::kendall_tau(pred_costs, actual_costs)
                                  : std::numeric_limits<double>::quiet_NaN();
    std::cout << "wrote " << a.out << ": " << rows.size() << " records, flow mse "
              << format_double(mean(fmses)) << ", fmr " << format_double(corr::fmr(qualities))
              << ", accuracy " << format_double(mean(accs)) << ", miou "
              << format_double(mean(mious)) << ", ranking tau " << format_double(tau) << '\n';
    return 0;
}

// ---------------------------------------------------------------- plan

struct PlanArgs {
    std::string mesh;
    std::string model_path;
    std::string out;
    std::string out_metrics;
    std::string dynamics = "oracle";
    std::string cost = "dcorr";
    std::string matching = "identity";
    uint64_t start_seed = 1;
    uint64_t target_seed = 2;
    int reach = 2;
    int k = 16;
    int horizon = 2;
    uint64_t seed = 0;
    double success_radius = 0.05;
    int miou_samples = 20000;
};

int cmd_plan(const PlanArgs& a) {
    tetmesh::TetMesh mesh = tetmesh::load_mesh(a.mesh);
    sim::Simulator simulator(mesh);

    plan::PlanSetup setup;
    setup.dynamics = plan::dynamics_from_string(a.dynamics);
    if (a.matching == "learned")
        setup.learned_matching = true;
    else if (a.matching != "identity")
        throw ValidationError("plan: matching must be identity or learned, got \"" + a.matching +
                              "\"");
    std::optional<heads::ImplicitModel> model;
    if (setup.dynamics == plan::DynamicsKind::Learned || setup.learned_matching) {
        if (a.model_path.empty())
            throw ValidationError("plan: --model is required for learned dynamics or matching");
        model = heads::ImplicitModel::load(a.model_path);
        setup.model = &*model;
    }

    plan::PlanProblem problem =
        plan::make_problem(simulator, sim::Camera{}, a.start_seed, a.target_seed, a.reach);
    problem.candidates = a.k;
    problem.horizon = a.horizon;
    problem.cost = plan::cost_from_string(a.cost);
    problem.success_radius = a.success_radius;

    plan::PlanResult res = plan::plan(simulator, setup, problem, a.seed);
    const plan::Rollout& best = res.rollouts[static_cast<size_t>(res.best)];
    plan::PlanEvaluation ev =
        plan::evaluate_plan(simulator, problem, best.actions, a.miou_samples, a.seed);

    json j;
    j["version"] = kToolVersion;
    j["mesh"] = tetmesh::mesh_content_id(mesh);
    j["sim_config"] = simulator.config().hash();
    j["model"] = model ? json(model->config().hash()) : json(nullptr);
    j["dynamics"] = a.dynamics;
    j["cost"] = a.cost;
    j["matching"] = a.matching;
    j["candidates"] = a.k;
    j["horizon"] = a.horizon;
    j["seed"] = a.seed;
    j["start_seed"] = a.start_seed;
    j["target_seed"] = a.target_seed;
    j["reach"] = a.reach;
    j["success_radius"] = a.success_radius;
    j["best"] = res.best;
    j["ranking"] = res.ranking;
    json costs = json::array(), valids = json::array();
    for (const plan::Rollout& r : res.rollouts) {
        costs.push_back(r.cost);
        valids.push_back(r.valid);
    }
    j["predicted_costs"] = costs;
    j["valid"] = valids;
    json actions = json::array();
    for (const sim::Action& act : best.actions)
        actions.push_back({{"p_g", jvec(act.p_g)}, {"p_r", jvec(act.p_r)}});
    j["best_actions"] = actions;
    j["executed"] = {{"corresponded", ev.corresponded}, {"chamfer", ev.chamfer},
                     {"fscore", ev.fscore},             {"miou", ev.miou},
                     {"success", ev.success}};
    open_out(a.out) << j.dump(2) << '\n';

    if (!a.out_metrics.empty()) {
        std::ofstream out = open_out(a.out_metrics);
        write_csv_preamble(out, simulator.config().hash());
        out << "sequence,corresponded,chamfer,fscore,miou,success\n";
        out << "best," << format_double(ev.corresponded) << ',' << format_double(ev.chamfer) << ','
            << format_double(ev.fscore) << ',' << format_double(ev.miou) << ','
            << (ev.success ? 1 : 0) << '\n';
    }
    std::cout << "wrote " << a.out << ": best candidate " << res.best << " of " << a.k
              << ", predicted cost " << format_double(best.cost) << ", executed corresponded "
              << format_double(ev.corresponded) << ", success " << (ev.success ? "yes" : "no")
              << '\n';
    return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::string dir;
    std::string out;
};

struct EvalSummary {
    std::string source;
    int records = 0;
    double flow_mse = 0.0;
    double fmr = 0.0;
    double accuracy = 0.0;
    double miou = 0.0;
    double tau = 0.0;
};

struct PlanSummary {
    int instances = 0;
    int successes = 0;
    std::vector<double> corresponded, chamfer, fscore, miou;
};

/// Splits one CSV data line; the report reader only handles the toolkit's own
/// unquoted output format.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double parse_cell(const std::string& cell) {
    if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::strtod(cell.c_str(), nullptr);
}

std::optional<EvalSummary> read_eval_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::string line;
    while (std::getline(in, line) && !line.empty() && line[0] == '#') {
    }
    if (line != "record,flow_mse,inlier_fraction,recovered,accuracy,miou,predicted_cost,actual_cost")
        return std::nullopt;
    EvalSummary s;
    s.source = path.filename().string();
    std::vector<double> fmses, accs, mious, preds, actuals;
    int recovered = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != 8) continue;
        fmses.push_back(parse_cell(cells[1]));
        recovered += cells[3] == "1" ? 1 : 0;
        accs.push_back(parse_cell(cells[4]));
        mious.push_back(parse_cell(cells[5]));
        preds.push_back(parse_cell(cells[6]));
        actuals.push_back(parse_cell(cells[7]));
        ++s.records;
    }
    if (s.records == 0) return std::nullopt;
    s.flow_mse = mean(fmses);
    s.fmr = static_cast<double>(recovered) / s.records;
    s.accuracy = mean(accs);
    s.miou = mean(mious);
    s.tau = s.records >= 2 ? metrics::kendall_tau(preds, actuals)
                           : std::numeric_limits<double>::quiet_NaN();
    return s;
}

bool read_plan_json(const fs::path& path, PlanSummary& agg) {
    std::ifstream in(path);
    if (!in) return false;
    json j;
    try {
        in >> j;
    } catch (const json::exception&) {
        return false;
    }
    if (!j.is_object() || !j.contains("executed") || !j.contains("best")) return false;
    const json& ev = j["executed"];
    ++agg.instances;
    agg.successes += ev.value("success", false) ? 1 : 0;
    agg.corresponded.push_back(ev.value("corresponded", 0.0));
    agg.chamfer.push_back(ev.value("chamfer", 0.0));
    agg.fscore.push_back(ev.value("fscore", 0.0));
    agg.miou.push_back(ev.value("miou", 0.0));
    return true;
}

int cmd_report(const ReportArgs& a) {
    if (!fs::is_directory(a.dir)) throw ValidationError("report: not a directory: " + a.dir);
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(a.dir))
        if (entry.is_regular_file()) paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());

    std::vector<EvalSummary> evals;
    PlanSummary plans;
    ConfigHasher inputs;
    for (const fs::path& p : paths) {
        if (p.extension() == ".csv") {
            if (auto s = read_eval_csv(p)) {
                evals.push_back(*s);
                inputs.add("eval", p.filename().string());
            }
        } else if (p.extension() == ".json") {
            if (read_plan_json(p, plans)) inputs.add("plan", p.filename().string());
        }
    }

    if (evals.empty() && plans.instances == 0)
        std::cerr << "warning: no evaluation or plan outputs in " << a.dir << '\n';

    std::cout << "evaluation: dynamics / correspondence / ranking\n";
    std::cout << "  source records flow_mse fmr accuracy miou tau\n";
    for (const EvalSummary& s : evals)
        std::cout << "  " << s.source << ' ' << s.records << ' ' << format_double(s.flow_mse)
                  << ' ' << format_double(s.fmr) << ' ' << format_double(s.accuracy) << ' '
                  << format_double(s.miou) << ' ' << format_double(s.tau) << '\n';
    std::cout << "plans: execution result / success rate\n";
    std::cout << "  instances success_rate corresponded chamfer fscore miou\n";
    if (plans.instances > 0)
        std::cout << "  " << plans.instances << ' '
                  << format_double(static_cast<double>(plans.successes) / plans.instances) << ' '
                  << format_double(mean(plans.corresponded)) << ' '
                  << format_double(mean(plans.chamfer)) << ' ' << format_double(mean(plans.fscore))
                  << ' ' << format_double(mean(plans.miou)) << '\n';

    if (!a.out.empty()) {
        std::ofstream out = open_out(a.out);
        write_csv_preamble(out, inputs.hex());
        out << "kind,source,count,flow_mse,fmr,accuracy,miou,tau,success_rate,corresponded,"
               "chamfer,fscore\n";
        for (const EvalSummary& s : evals)
            out << "evaluation," << s.source << ',' << s.records << ','
                << format_double(s.flow_mse) << ',' << format_double(s.fmr) << ','
                << format_double(s.accuracy) << ',' << format_double(s.miou) << ','
                << format_double(s.tau) << ",,,,\n";
        if (plans.instances > 0)
            out << "plans," << a.dir << ',' << plans.instances << ",,,,"
                << format_double(mean(plans.miou)) << ",,"
                << format_double(static_cast<double>(plans.successes) / plans.instances) << ','
                << format_double(mean(plans.corresponded)) << ','
                << format_double(mean(plans.chamfer)) << ',' << format_double(mean(plans.fscore))
                << '\n';
    }
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Desk-scale deformable manipulation toolkit: simulate, train the implicit "
                 "geometry/flow/correspondence heads, evaluate, and plan grasp sequences."};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    app.footer("Environment: DEFO_THREADS caps internal linear-algebra threads.\n"
               "Exit codes: 0 success, 2 invalid input, 3 runtime failure.");

    MeshArgs mesh_args;
    CLI::App* mesh = app.add_subcommand("mesh", "Write a built-in shape as a mesh file");
    mesh->add_option("--shape", mesh_args.shape, "Shape name (see --list)");
    mesh->add_option("--out", mesh_args.out, "Output mesh JSON path");
    mesh->add_flag("--list", mesh_args.list, "List the built-in shapes and exit");

    SimulateArgs sim_args;
    CLI::App* simulate =
        app.add_subcommand("simulate", "Roll a seeded action sequence into a trajectory file");
    simulate->add_option("--mesh", sim_args.mesh, "Mesh JSON path")->required();
    simulate->add_option("--out", sim_args.out, "Output trajectory path (JSON lines)")->required();
    simulate->add_option("--actions", sim_args.actions, "Number of grasp actions");
    simulate->add_option("--seed", sim_args.seed, "Sampling seed");
    simulate->add_option("--reset-period", sim_args.reset_period,
                         "Re-randomize the scene every this many actions");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Fit the implicit heads on trajectories");
    train_args.sub = train;
    train->add_option("--mesh", train_args.mesh, "Mesh JSON path")->required();
    train->add_option("--traj", train_args.trajs, "Trajectory file (repeatable)")->required();
    train->add_option("--out", train_args.out_model, "Output checkpoint path")->required();
    train->add_option("--curves", train_args.out_curves, "Loss-curve CSV path");
    train->add_option("--config", train_args.config_file, "Training config file (key=value)");
    train->add_option("--steps", train_args.tc.steps, "Optimization steps");
    train->add_option("--seed", train_args.tc.seed, "Training seed");
    train->add_option("--lr", train_args.tc.lr, "Learning rate");
    train->add_option("--query-batch", train_args.tc.query_batch, "Occupancy probes per step");
    train->add_option("--pair-batch", train_args.tc.pair_batch, "Contrastive pairs per step");
    train->add_option("--val-every", train_args.tc.val_every, "Validation interval in steps");
    train->add_option("--w-occ", train_args.tc.w_occ, "Occupancy loss weight");
    train->add_option("--w-flow", train_args.tc.w_flow, "Flow loss weight");
    train->add_option("--w-corr", train_args.tc.w_corr, "Correspondence loss weight");
    train->add_option("--d-thres", train_args.tc.contrastive.d_thres,
                      "Geodesic label threshold, meters (0 = 10% of the diameter)");
    train->add_option("--corr", train_args.corr, "Correspondence loss: geodesic, euclid, none");
    train->add_option("--field-res", train_args.field_res, "Feature plane resolution");
    train->add_option("--geometry-dim", train_args.geometry_dim, "Geometry feature width");
    train->add_option("--embed-dim", train_args.embed_dim, "Embedding width");
    train->add_option("--hidden-dim", train_args.hidden_dim, "Decoder hidden width");
    train->add_option("--depth", train_args.depth, "Decoder hidden layers");
    train->add_flag("--no-fusion", train_args.no_fusion,
                    "Detach the occupancy hidden activations from the flow head");
    train->add_option("--box-inflate", train_args.box_inflate,
                      "Feature plane coverage as a factor of the data bounds");

    EvaluateArgs eval_args;
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Score a checkpoint on a held-out trajectory");
    evaluate->add_option("--mesh", eval_args.mesh, "Mesh JSON path")->required();
    evaluate->add_option("--model", eval_args.model, "Checkpoint path")->required();
    evaluate->add_option("--traj", eval_args.traj, "Trajectory to score")->required();
    evaluate->add_option("--out", eval_args.out, "Per-record metrics CSV path")->required();
    evaluate->add_option("--tau1", eval_args.tau1, "Inlier distance, meters");
    evaluate->add_option("--tau2", eval_args.tau2, "Recall cutoff on the inlier fraction");
    evaluate->add_option("--radius", eval_args.radius, "Accuracy radius, meters");
    evaluate->add_option("--miou-samples", eval_args.miou_samples,
                         "Volume IoU samples per record (0 disables)");
    evaluate->add_option("--miou-seed", eval_args.miou_seed, "Volume IoU sampling seed");

    PlanArgs plan_args;
    CLI::App* planp =
        app.add_subcommand("plan", "Sample grasp sequences toward a target and pick the best");
    planp->add_option("--mesh", plan_args.mesh, "Mesh JSON path")->required();
    planp->add_option("--out", plan_args.out, "Plan report JSON path")->required();
    planp->add_option("--out-metrics", plan_args.out_metrics, "Executed-metrics CSV path");
    planp->add_option("--model", plan_args.model_path,
                      "Checkpoint path (required for learned dynamics or matching)");
    planp->add_option("--dynamics", plan_args.dynamics, "Roll-out dynamics: oracle, learned");
    planp->add_option("--cost", plan_args.cost, "Roll-out cost: dcorr, chamfer");
    planp->add_option("--matching", plan_args.matching,
                      "Start-to-target correspondence: identity, learned");
    planp->add_option("--start-seed", plan_args.start_seed, "Start configuration seed");
    planp->add_option("--target-seed", plan_args.target_seed, "Target configuration seed");
    planp->add_option("--reach", plan_args.reach, "Actions separating target from start");
    planp->add_option("--k", plan_args.k, "Candidate sequences");
    planp->add_option("--horizon", plan_args.horizon, "Actions per sequence");
    planp->add_option("--seed", plan_args.seed, "Candidate sampling seed");
    planp->add_option("--success-radius", plan_args.success_radius,
                      "Success threshold on the root corresponded distance, meters");
    planp->add_option("--miou-samples", plan_args.miou_samples, "Volume IoU samples (0 disables)");

    ReportArgs report_args;
    CLI::App* report =
        app.add_subcommand("report", "Aggregate evaluation and plan outputs into one table");
    report->add_option("--dir", report_args.dir, "Directory of metrics CSVs and plan JSONs")
        ->required();
    report->add_option("--out", report_args.out, "Aggregate table CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_thread_env();
        if (mesh->parsed()) return cmd_mesh(mesh_args);
        if (simulate->parsed()) return cmd_simulate(sim_args);
        if (train->parsed()) return cmd_train(train_args);
        if (evaluate->parsed()) return cmd_evaluate(eval_args);
        if (planp->parsed()) return cmd_plan(plan_args);
        if (report->parsed()) return cmd_report(report_args);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const RuntimeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

}  // namespace defo::cli

int main(int argc, char** argv) { return defo::cli::run(argc, argv); }

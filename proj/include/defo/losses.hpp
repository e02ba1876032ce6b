#pragma once

#include "defo/decoders.hpp"
#include "defo/softsim.hpp"
#include "defo/tetmesh.hpp"

#include <string>
#include <utility>
#include <vector>

namespace defo::train {

struct ContrastiveConfig {
    double m_pos = 0.1;   // feature units
    double m_neg = 1.4;   // feature units
    double d_thres = 0.0; // meters; trainers default it to 0.1 x geodesic diameter
    void validate() const;
};

/// Hinge pair loss with a fixed negative margin:
/// I [D - m_pos]+^2 + (1 - I) [m_neg - D]+^2 with D the Euclidean feature
/// distance. Gradients accumulate into dfp/dfq when given.
double loss_contrastive_euclid(const nn::Vector& f_p, const nn::Vector& f_q, bool is_match,
                               const ContrastiveConfig& cfg, nn::Vector* dfp = nullptr,
                               nn::Vector* dfq = nullptr);

/// Geodesic variant: the positive branch applies when d_O < d_thres and
/// matches the fixed-margin loss exactly; otherwise the negative margin grows
/// as log(d_O / d_thres) + m_neg.
double loss_contrastive_geo(const nn::Vector& f_p, const nn::Vector& f_q, double d_O,
                            const ContrastiveConfig& cfg, nn::Vector* dfp = nullptr,
                            nn::Vector* dfq = nullptr);

/// One supervised pair: a material point seen in the record's pre state and
/// another in its post state, with rest-pose distances for labeling.
struct PairSample {
    int vertex_p = -1;
    int vertex_q = -1;
    Vec3 p = Vec3::Zero();     // position of vertex_p in the pre state
    Vec3 q = Vec3::Zero();     // position of vertex_q in the post state
    double d_geo = 0.0;        // rest-pose tet-graph geodesic, meters
    double d_rest_euclid = 0.0;
    bool positive = false;     // d_geo < d_thres
};

struct PairBatch {
    std::vector<PairSample> pairs;
    double d_thres = 0.0;
};

/// Balanced positives (same vertex across pre/post) and rejection-sampled
/// negatives (d_geo >= d_thres). Throws when the mesh cannot furnish
/// negatives at the given threshold.
PairBatch sample_pairs(const sim::ActionRecord& rec, const tetmesh::TetMesh& mesh,
                       const tetmesh::GeodesicTable& table, const ContrastiveConfig& cfg,
                       int n_pos, int n_neg, Rng& rng);

struct QueryPoint {
    Vec3 p = Vec3::Zero();
    bool inside = false;
};

/// Gaussian occupancy probes centered on the state's center of mass with
/// per-axis std of half the bounding-box half-extent; labels from the
/// point-in-tet test at the given positions.
std::vector<QueryPoint> sample_query_points(const std::vector<Vec3>& positions,
                                            const tetmesh::TetMesh& mesh, Rng& rng, int n);

enum class CorrMode { Geodesic, Euclid, None };

std::string to_string(CorrMode mode);
CorrMode corr_mode_from_string(const std::string& s);

struct TrainConfig {
    int steps = 300;
    int query_batch = 512;  // occupancy probes per step
    int pair_batch = 256;   // correspondence pairs per step
    int val_every = 10;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double w_occ = 1.0;
    double w_flow = 1.0;
    double w_corr = 1.0;
    CorrMode corr = CorrMode::Geodesic;
    ContrastiveConfig contrastive;
    uint64_t seed = 0;

    std::string hash() const;
    /// Key-value file ("key=value" lines, '#' comments). Unknown keys and
    /// unparsable values are reported per line.
    static TrainConfig from_file(const std::string& path);
    void save(const std::string& path) const;
};

struct Dataset {
    tetmesh::TetMesh mesh;
    tetmesh::GeodesicTable table;
    std::vector<sim::Trajectory> trajectories;
};

struct StepLog {
    int step = 0;
    double occ = 0.0;
    double flow = 0.0;
    double corr = 0.0;
    double total = 0.0;
};

struct TrainResult {
    explicit TrainResult(heads::ImplicitModel m) : model(std::move(m)) {}

    heads::ImplicitModel model;  // validation-selected checkpoint
    std::vector<StepLog> curve;
    std::vector<std::pair<int, double>> val_curve;  // (step, flow mse)
    int best_step = -1;
    double best_val = 0.0;
    double d_thres = 0.0;  // resolved threshold used for pair labels
    bool diverged = false;
    std::string config_hash;
};

/// Joint minimization of occupancy cross-entropy, flow mean squared error,
/// and the configured contrastive loss with decoupled-decay Adam. Every
/// val_every steps the flow error on held-out records picks the checkpoint;
/// a non-finite loss aborts with the last good one.
TrainResult train(const Dataset& data, const heads::ModelConfig& mc, const TrainConfig& tc);

/// Per-step losses and validation points, one CSV row per step.
void save_curves(const TrainResult& result, const std::string& path);

}  // namespace defo::train

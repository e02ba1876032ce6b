#include "defo/matching.hpp"

#include <cmath>
#include <fstream>

namespace defo::corr {

namespace {

void check_mapping(const Correspondence& xi, size_t n_targets, const char* name) {
    std::vector<std::string> bad;
    for (size_t i = 0; i < xi.target.size(); ++i)
        if (xi.target[i] < 0 || static_cast<size_t>(xi.target[i]) >= n_targets) {
            bad.push_back(std::string(name) + " maps point " + std::to_string(i) +
                          " to out-of-range target " + std::to_string(xi.target[i]));
            if (bad.size() >= 8) break;
        }
    if (!bad.empty()) throw ValidationError("correspondence", bad);
}

void check_pair(const Correspondence& pred, const Correspondence& gt,
                const std::vector<Vec3>& tgt_points) {
    if (tgt_points.empty()) throw ValidationError("match quality: empty target point set");
    if (pred.size() != gt.size())
        throw ValidationError("match quality: mappings cover different source sizes (" +
                              std::to_string(pred.size()) + " vs " + std::to_string(gt.size()) +
                              ")");
    if (pred.size() == 0) throw ValidationError("match quality: empty mappings");
    check_mapping(pred, tgt_points.size(), "prediction");
    check_mapping(gt, tgt_points.size(), "ground truth");
}

double fraction_within(const Correspondence& pred, const Correspondence& gt,
                       const std::vector<Vec3>& tgt_points, double radius) {
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const Vec3& a = tgt_points[static_cast<size_t>(pred.target[i])];
        const Vec3& b = tgt_points[static_cast<size_t>(gt.target[i])];
        if ((a - b).norm() < radius) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

Correspondence match(const std::vector<nn::Vector>& f_src, const std::vector<nn::Vector>& f_tgt) {
    if (f_src.empty() || f_tgt.empty())
        throw ValidationError("match: empty feature set (" + std::to_string(f_src.size()) +
                              " source, " + std::to_string(f_tgt.size()) + " target)");
    Eigen::Index dim = f_src.front().size();
    for (const nn::Vector& f : f_src)
        if (f.size() != dim) throw ValidationError("match: inconsistent source feature widths");
    for (const nn::Vector& f : f_tgt)
        if (f.size() != dim) throw ValidationError("match: target feature width differs");

    Correspondence xi;
    xi.target.resize(f_src.size());
    xi.distance.resize(f_src.size());
    for (size_t i = 0; i < f_src.size(); ++i) {
        int best = 0;
        double best_sq = (f_src[i] - f_tgt[0]).squaredNorm();
        for (size_t j = 1; j < f_tgt.size(); ++j) {
            double sq = (f_src[i] - f_tgt[j]).squaredNorm();
            if (sq < best_sq) {
                best_sq = sq;
                best = static_cast<int>(j);
            }
        }
        xi.target[i] = best;
        xi.distance[i] = std::sqrt(best_sq);
    }
    return xi;
}

double d_corr(const std::vector<Vec3>& src, const std::vector<Vec3>& tgt,
              const Correspondence& xi) {
    if (src.empty()) throw ValidationError("corresponded distance: empty source");
    if (xi.target.size() != src.size())
        throw ValidationError("corresponded distance: mapping covers " +
                              std::to_string(xi.target.size()) + " points, source has " +
                              std::to_string(src.size()));
    check_mapping(xi, tgt.size(), "mapping");
    double total = 0.0;
    for (size_t i = 0; i < src.size(); ++i)
        total += (src[i] - tgt[static_cast<size_t>(xi.target[i])]).squaredNorm();
    return total / static_cast<double>(src.size());
}

void MatchThresholds::validate() const {
    std::vector<std::string> bad;
    if (!(tau1 > 0.0)) bad.push_back("tau1 must be positive");
    if (!(tau2 > 0.0 && tau2 < 1.0)) bad.push_back("tau2 must lie in (0,1)");
    if (!(accuracy_radius > 0.0)) bad.push_back("accuracy radius must be positive");
    if (!bad.empty()) throw ValidationError("match thresholds", bad);
}

double inlier_fraction(const Correspondence& pred, const Correspondence& gt,
                       const std::vector<Vec3>& tgt_points, double tau1) {
    check_pair(pred, gt, tgt_points);
    return fraction_within(pred, gt, tgt_points, tau1);
}

double corr_accuracy(const Correspondence& pred, const Correspondence& gt,
                     const std::vector<Vec3>& tgt_points, double radius) {
    check_pair(pred, gt, tgt_points);
    return fraction_within(pred, gt, tgt_points, radius);
}

PairQuality pair_quality(const Correspondence& pred, const Correspondence& gt,
                         const std::vector<Vec3>& tgt_points, const MatchThresholds& thresholds) {
    thresholds.validate();
    PairQuality q;
    q.inlier_fraction = inlier_fraction(pred, gt, tgt_points, thresholds.tau1);
    q.recovered = q.inlier_fraction > thresholds.tau2;
    q.accuracy = corr_accuracy(pred, gt, tgt_points, thresholds.accuracy_radius);
    return q;
}

double fmr(const std::vector<PairQuality>& pairs) {
    if (pairs.empty()) throw ValidationError("feature-match recall over an empty dataset");
    double total = 0.0;
    for (const PairQuality& q : pairs) total += q.recovered ? 1.0 : 0.0;
    return total / static_cast<double>(pairs.size());
}

void save_match_report(const std::vector<MatchReportRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write match report: " + path);
    out << "pair,inlier_fraction,recovered,accuracy\n";
    for (const MatchReportRow& row : rows)
        out << row.pair << ',' << format_double(row.quality.inlier_fraction) << ','
            << (row.quality.recovered ? 1 : 0) << ',' << format_double(row.quality.accuracy)
            << '\n';
}

}  // namespace defo::corr

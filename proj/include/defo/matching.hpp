#pragma once

#include "defo/common.hpp"
#include "defo/neural.hpp"

#include <string>
#include <vector>

namespace defo::corr {

/// Per-source-point map into a target point set. Targets may repeat; the map
/// carries the feature distance of each chosen pair.
struct Correspondence {
    std::vector<int> target;
    std::vector<double> distance;  // feature distance at the chosen target

    size_t size() const { return target.size(); }
};

/// Nearest neighbor in feature space for every source point; ties go to the
/// lowest target index. The summed-distance objective decomposes per point,
/// so this is its exact minimizer. Throws on empty inputs or width mismatch.
Correspondence match(const std::vector<nn::Vector>& f_src, const std::vector<nn::Vector>& f_tgt);

/// Mean squared distance between each source point and its mapped target.
double d_corr(const std::vector<Vec3>& src, const std::vector<Vec3>& tgt,
              const Correspondence& xi);

/// Match-quality thresholds. tau1 and the accuracy radius are in meters;
/// tau2 is a fraction. The desk preset scales the meter-valued entries by
/// 0.1 to suit 0.3 m objects.
struct MatchThresholds {
    double tau1 = 0.1;             // inlier distance
    double tau2 = 0.05;            // recall cutoff on the inlier fraction
    double accuracy_radius = 0.05;

    static MatchThresholds desk() { return {0.01, 0.05, 0.005}; }
    void validate() const;
};

/// Fraction of source points whose predicted target lies strictly within
/// tau1 of the ground-truth target.
double inlier_fraction(const Correspondence& pred, const Correspondence& gt,
                       const std::vector<Vec3>& tgt_points, double tau1);

/// Fraction of predicted targets strictly within the accuracy radius of the
/// ground-truth target.
double corr_accuracy(const Correspondence& pred, const Correspondence& gt,
                     const std::vector<Vec3>& tgt_points, double radius = 0.05);

/// All per-pair quality numbers in one pass: the inlier fraction, whether it
/// clears tau2 (the feature-match recall bit), and the accuracy.
struct PairQuality {
    double inlier_fraction = 0.0;
    bool recovered = false;
    double accuracy = 0.0;
};

PairQuality pair_quality(const Correspondence& pred, const Correspondence& gt,
                         const std::vector<Vec3>& tgt_points, const MatchThresholds& thresholds);

/// Feature-match recall over a dataset: mean recovered bit. Throws on empty.
double fmr(const std::vector<PairQuality>& pairs);

struct MatchReportRow {
    std::string pair;
    PairQuality quality;
};

/// CSV report, one row per evaluated state pair.
void save_match_report(const std::vector<MatchReportRow>& rows, const std::string& path);

}  // namespace defo::corr

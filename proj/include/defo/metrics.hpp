#pragma once

#include "defo/common.hpp"

#include <functional>
#include <vector>

namespace defo::metrics {

/// Point-membership predicate for a volumetric shape.
using MembershipTest = std::function<bool(const Vec3&)>;

/// Monte-Carlo intersection-over-union from uniform box samples. When no
/// sample lands in either shape the ratio is undefined; the result reports 0
/// with the flag set.
struct MiouResult {
    double value = 0.0;
    bool union_empty = false;
};

MiouResult miou(const MembershipTest& pred, const MembershipTest& gt, const Aabb& box,
                int n_samples, Rng& rng);

/// Mean squared flow error over all vertices.
double flow_mse(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

/// Mean squared flow error restricted to the visible vertex ids.
double flow_mse_vis(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                    const std::vector<int>& visible_ids);

/// Symmetric sum of squared nearest-neighbor distances, unnormalized.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// Chamfer variant with each directed sum divided by its source size;
/// reports label it separately from the unnormalized value.
double chamfer_mean(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// Harmonic mean of precision and recall under nearest-neighbor
/// thresholding at tau_d (strictly within); 0 when both are 0. The default
/// radius suits 0.3 m objects.
struct FscoreResult {
    double f = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

FscoreResult fscore(const std::vector<Vec3>& source, const std::vector<Vec3>& gt,
                    double tau_d = 0.01);

/// Kendall rank correlation (P - Q) / (P + Q) between two score vectors over
/// the same items. Pairs tied in either vector are excluded; if every pair
/// is tied the statistic is undefined and NaN is returned.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace defo::metrics

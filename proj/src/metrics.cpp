#include "defo/metrics.hpp"

#include <cmath>
#include <limits>

namespace defo::metrics {

namespace {

void check_cloud(const std::vector<Vec3>& pts, const char* name) {
    if (pts.empty()) throw ValidationError(std::string(name) + ": empty point set");
}

double directed_sq_sum(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double total = 0.0;
    for (const Vec3& x : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& y : to) best = std::min(best, (x - y).squaredNorm());
        total += best;
    }
    return total;
}

double fraction_covered(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                        double radius) {
    double sq = radius * radius;
    size_t hits = 0;
    for (const Vec3& x : from) {
        for (const Vec3& y : to)
            if ((x - y).squaredNorm() < sq) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(from.size());
}

}  // namespace

MiouResult miou(const MembershipTest& pred, const MembershipTest& gt, const Aabb& box,
                int n_samples, Rng& rng) {
    if (n_samples < 1) throw ValidationError("volumetric IoU needs at least one sample");
    if (!box.valid()) throw ValidationError("volumetric IoU: invalid sampling box");
    if (!pred || !gt) throw ValidationError("volumetric IoU: missing membership test");
    long long inter = 0, uni = 0;
    for (int s = 0; s < n_samples; ++s) {
        Vec3 p(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
               rng.uniform(box.lo.z(), box.hi.z()));
        bool in_pred = pred(p), in_gt = gt(p);
        inter += (in_pred && in_gt) ? 1 : 0;
        uni += (in_pred || in_gt) ? 1 : 0;
    }
    MiouResult res;
    res.union_empty = uni == 0;
    res.value = res.union_empty ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    return res;
}

double flow_mse(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    check_cloud(pred, "flow error");
    if (pred.size() != gt.size())
        throw ValidationError("flow error: " + std::to_string(pred.size()) + " predictions vs " +
                              std::to_string(gt.size()) + " ground-truth vectors");
    double total = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) total += (pred[i] - gt[i]).squaredNorm();
    return total / static_cast<double>(pred.size());
}

double flow_mse_vis(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                    const std::vector<int>& visible_ids) {
    check_cloud(pred, "flow error");
    if (pred.size() != gt.size())
        throw ValidationError("flow error: " + std::to_string(pred.size()) + " predictions vs " +
                              std::to_string(gt.size()) + " ground-truth vectors");
    if (visible_ids.empty()) throw ValidationError("flow error: empty visible set");
    double total = 0.0;
    for (int id : visible_ids) {
        if (id < 0 || static_cast<size_t>(id) >= pred.size())
            throw ValidationError("flow error: visible id " + std::to_string(id) +
                                  " outside the vertex range");
        total += (pred[static_cast<size_t>(id)] - gt[static_cast<size_t>(id)]).squaredNorm();
    }
    return total / static_cast<double>(visible_ids.size());
}

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    check_cloud(a, "chamfer");
    check_cloud(b, "chamfer");
    return directed_sq_sum(a, b) + directed_sq_sum(b, a);
}

double chamfer_mean(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    check_cloud(a, "chamfer");
    check_cloud(b, "chamfer");
    return directed_sq_sum(a, b) / static_cast<double>(a.size()) +
           directed_sq_sum(b, a) / static_cast<double>(b.size());
}

FscoreResult fscore(const std::vector<Vec3>& source, const std::vector<Vec3>& gt, double tau_d) {
    check_cloud(source, "f-score");
    check_cloud(gt, "f-score");
    if (!(tau_d > 0.0)) throw ValidationError("f-score radius must be positive");
    FscoreResult res;
    res.precision = fraction_covered(source, gt, tau_d);
    res.recall = fraction_covered(gt, source, tau_d);
    double denom = res.precision + res.recall;
    res.f = denom > 0.0 ? 2.0 * res.precision * res.recall / denom : 0.0;
    return res;
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ValidationError("rank correlation: score vectors of different length");
    if (a.size() < 2) throw ValidationError("rank correlation needs at least two items");
    long long concordant = 0, discordant = 0;
    for (size_t i = 0; i + 1 < a.size(); ++i)
        for (size_t j = i + 1; j < a.size(); ++j) {
            double da = a[i] - a[j], db = b[i] - b[j];
            if (da == 0.0 || db == 0.0) continue;  // ties count for neither side
            if ((da < 0.0) == (db < 0.0))
                ++concordant;
            else
                ++discordant;
        }
    if (concordant + discordant == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(concordant - discordant) /
           static_cast<double>(concordant + discordant);
}

}  // namespace defo::metrics

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace defo {

using Vec3 = Eigen::Vector3d;

inline constexpr const char* kToolVersion = "defo 0.1.0";

/// Input/schema problems the caller can fix (CLI exit code 2).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
    ValidationError(const std::string& what, std::vector<std::string> items)
        : std::runtime_error(join(what, items)), items_(std::move(items)) {}
    const std::vector<std::string>& items() const { return items_; }

private:
    static std::string join(const std::string& what, const std::vector<std::string>& items) {
        std::string s = what;
        for (const auto& it : items) {
            s += "\n  - ";
            s += it;
        }
        return s;
    }
    std::vector<std::string> items_;
};

/// Failures at run time (divergence, unlocatable points, ...; CLI exit code 3).
class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    bool valid() const { return (lo.array() <= hi.array()).all(); }
    void expand(const Vec3& p) { lo = lo.cwiseMin(p); hi = hi.cwiseMax(p); }
    void expand(const Aabb& b) { lo = lo.cwiseMin(b.lo); hi = hi.cwiseMax(b.hi); }
    Aabb inflated(double factor) const {
        Vec3 c = center(), h = 0.5 * factor * (hi - lo);
        return {c - h, c + h};
    }
    Vec3 center() const { return 0.5 * (lo + hi); }
    Vec3 extent() const { return hi - lo; }
    double diagonal() const { return (hi - lo).norm(); }
    bool contains(const Vec3& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    Vec3 clamp(const Vec3& p) const { return p.cwiseMax(lo).cwiseMin(hi); }

    static Aabb of(const std::vector<Vec3>& pts) {
        Aabb b;
        for (const auto& p : pts) b.expand(p);
        return b;
    }
};

uint64_t splitmix64(uint64_t x);

/// Deterministic random source. All sampling in the toolkit goes through this
/// wrapper; the raw-bits-to-double conversions are spelled out so that streams
/// are reproducible independent of the standard library's distribution
/// implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

    uint64_t bits();

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n);
    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent child stream, stable under reordering of sibling draws.
    Rng child(uint64_t key) const;

private:
    // xorshift-multiply generator (splitmix64 stepping); period 2^64.
    uint64_t state_;
};

/// FNV-1a over bytes; used for config hashes embedded in outputs.
uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a(const std::string& s, uint64_t h);
uint64_t fnv1a(const char* s, uint64_t h);  // stops literals decaying to the void* overload
std::string hash_hex(uint64_t h);

/// Canonical "key=value;..." serialization hashed into outputs.
class ConfigHasher {
public:
    template <typename T>
    ConfigHasher& add(const std::string& key, const T& value) {
        entries_.push_back(key + "=" + to_string_exact(value));
        return *this;
    }
    std::string hex() const;

private:
    static std::string to_string_exact(const std::string& v) { return v; }
    static std::string to_string_exact(const char* v) { return v; }
    static std::string to_string_exact(bool v) { return v ? "true" : "false"; }
    static std::string to_string_exact(double v);
    template <typename T>
    static std::string to_string_exact(const T& v) {
        return std::to_string(v);
    }
    std::vector<std::string> entries_;
};

/// Shortest round-trip decimal formatting for doubles (stable across runs).
std::string format_double(double v);

}  // namespace defo

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bif {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;

/// Closed real interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double v) const { return v >= lo && v <= hi; }
    double clamp(double v) const { return std::min(std::max(v, lo), hi); }
};

/// Axis-aligned box, one interval per state dimension.
struct Box {
    std::vector<Interval> dims;

    int size() const { return static_cast<int>(dims.size()); }
    bool contains(const Vector& x) const {
        if (x.size() != size()) return false;
        for (int i = 0; i < size(); ++i)
            if (!dims[i].contains(x[i])) return false;
        return true;
    }
    Vector clamp(const Vector& x) const {
        Vector out = x;
        for (int i = 0; i < size(); ++i) out[i] = dims[i].clamp(x[i]);
        return out;
    }
};

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularJacobianError : std::runtime_error {
    double condition;
    explicit SingularJacobianError(const std::string& what, double cond = 0.0)
        : std::runtime_error(what), condition(cond) {}
};

struct DefectiveEigenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct McDegenerateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// splitmix64 step; also used to derive child seeds from a parent seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic seed derivation: child streams never collide with the parent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0xa0761d6478bd642fULL + stream * 0xe7037ed1a0b428dbULL);
    splitmix64(s);
    return splitmix64(s);
}

/// Self-contained RNG (xoshiro256++) with pinned uniform/normal transforms,
/// so runs reproduce bit-for-bit independent of the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no cached spare, fixed draw order).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    Vector normal_vector(int n) {
        Vector v(n);
        for (int i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

/// Condition number estimate from SVD; intended for the small dense
/// Jacobians this library works with.
inline double condition_number(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

inline Vector linspace(double lo, double hi, int n) {
    Vector v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return v;
}

}  // namespace bif

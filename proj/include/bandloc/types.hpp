#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bandloc {

using cd = std::complex<double>;

constexpr double kSpeedOfLight = 299792458.0; // m/s

/// 2-D coordinate in meters.
struct Location {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const Location& a, const Location& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Axis-aligned feasible area.
struct Rect {
    double x_min = 0.0, x_max = 0.0;
    double y_min = 0.0, y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }

    bool contains(const Location& p) const {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
    }

    /// Projects a point onto the rectangle (nearest boundary point if outside).
    Location clamp(const Location& p) const {
        Location out = p;
        out.x = std::min(std::max(out.x, x_min), x_max);
        out.y = std::min(std::max(out.y, y_min), y_max);
        return out;
    }
};

/// One OFDM frequency band: center frequency, bandwidth and subcarrier grid.
struct BandSpec {
    int band_index = 0;          // 1-based band number n
    double center_freq_hz = 0.0;
    double bandwidth_hz = 0.0;
    int n_subcarriers = 0;

    double subcarrier_spacing_hz() const {
        return bandwidth_hz / static_cast<double>(n_subcarriers);
    }

    /// Absolute frequency of subcarrier k, k = 0..n_subcarriers-1.
    double subcarrier_freq_hz(int k) const {
        return center_freq_hz +
               (static_cast<double>(k) - static_cast<double>(n_subcarriers) / 2.0) *
                   subcarrier_spacing_hz();
    }

    void validate() const {
        if (n_subcarriers <= 0)
            throw std::invalid_argument("BandSpec: n_subcarriers must be > 0");
        if (bandwidth_hz <= 0.0)
            throw std::invalid_argument("BandSpec: bandwidth must be > 0");
    }
};

/// One multipath component: delay plus a complex gain per band.
struct Path {
    std::map<int, cd> alpha; // band_index -> complex gain
    double tau_s = 0.0;      // propagation delay, seconds
};

struct PathSet {
    std::vector<Path> paths;
};

/// Per-subcarrier complex channel response for one band.
/// values are antenna-major: values[a * n_subcarriers + k].
struct CsiVector {
    std::vector<cd> values;
    BandSpec band;
    int n_antennas = 1;

    int n_subcarriers() const { return band.n_subcarriers; }

    void validate() const {
        band.validate();
        if (n_antennas <= 0)
            throw std::invalid_argument("CsiVector: n_antennas must be > 0");
        if (values.size() !=
            static_cast<size_t>(band.n_subcarriers) * static_cast<size_t>(n_antennas))
            throw std::invalid_argument("CsiVector: value count inconsistent with band");
        for (const cd& v : values)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw std::invalid_argument("CsiVector: non-finite entry");
    }
};

/// Deployment geometry: area, reference points (RPs), test points (TPs), AP.
struct Scenario {
    Rect area;
    std::vector<Location> reference_points;
    std::vector<Location> test_points;
    Location ap_location;
    std::uint64_t rng_seed = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Deterministic random stream. The engine (mt19937_64) is fully specified by
/// the standard and all distributions are implemented explicitly, so a given
/// seed yields the same sequence on every platform. Worker streams are derived
/// with fork() so parallel generation stays reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // modulo bias is negligible for the ranges used here
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller (trig form, spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Exponential with the given mean.
    double exponential(double mean) {
        return -mean * std::log(1.0 - uniform());
    }

    /// Circularly symmetric complex Gaussian with total variance `variance`.
    cd complex_normal(double variance) {
        double s = std::sqrt(variance / 2.0);
        return cd(s * normal(), s * normal());
    }

    /// Independent child stream for worker/task `index`.
    Rng fork(std::uint64_t index) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(index + 0x51ed2701)));
    }

    /// Named child stream; tags keep the stream layout stable across code changes.
    Rng fork(std::string_view tag) const { return fork(detail::fnv1a64(tag)); }

    /// Fisher-Yates shuffle of an index vector.
    void shuffle(std::vector<int>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace bandloc

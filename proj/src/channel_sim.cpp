#include "bandloc/channel_sim.hpp"

#include <algorithm>

namespace bandloc {

namespace {

// Factor pair (rows, cols) with rows*cols == n, rows <= cols, closest to square.
std::pair<int, int> grid_shape(int n) {
    int rows = 1;
    for (int r = 1; r * r <= n; ++r)
        if (n % r == 0)
            rows = r;
    return {rows, n / rows};
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

// Spatially coherent standard-normal field. Each (path, slot) pair owns a
// lattice of independent node draws at `pitch` spacing; a lookup bilinearly
// blends the four surrounding nodes and re-standardizes, so the marginal
// stays exactly N(0,1) while nearby locations move together and locations a
// few pitches apart decorrelate. Node streams derive from the scenario seed
// alone: the layout is a property of the site, not of the caller's stream.
class PathField {
public:
    PathField(std::uint64_t scenario_seed, const Rect& area, double pitch)
        : seed_(detail::splitmix64(scenario_seed ^ detail::fnv1a64("paths.field"))),
          x0_(area.x_min),
          y0_(area.y_min),
          pitch_(pitch) {}

    double normal(int path, int slot, const Location& loc) const {
        const double gx = (loc.x - x0_) / pitch_;
        const double gy = (loc.y - y0_) / pitch_;
        const double ix = std::floor(gx), iy = std::floor(gy);
        const double fx = gx - ix, fy = gy - iy;
        const long i0 = static_cast<long>(ix), j0 = static_cast<long>(iy);
        const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        static constexpr long di[4] = {0, 1, 0, 1};
        static constexpr long dj[4] = {0, 0, 1, 1};
        double acc = 0.0, wsq = 0.0;
        for (int k = 0; k < 4; ++k) {
            if (w[k] == 0.0) continue;
            acc += w[k] * node(path, slot, i0 + di[k], j0 + dj[k]);
            wsq += w[k] * w[k];
        }
        return acc / std::sqrt(wsq);
    }

private:
    double node(int path, int slot, long i, long j) const {
        std::uint64_t h = seed_;
        h = detail::splitmix64(h ^ (static_cast<std::uint64_t>(path) * 0x100000001b3ULL +
                                    static_cast<std::uint64_t>(slot)));
        h = detail::splitmix64(h ^ static_cast<std::uint64_t>(i));
        h = detail::splitmix64(h ^ (static_cast<std::uint64_t>(j) + 0x9e3779b97f4a7c15ULL));
        return Rng(h).normal();
    }

    std::uint64_t seed_;
    double x0_, y0_, pitch_;
};

enum FieldSlot {
    kSlotDelay = 0,
    kSlotGainRe,
    kSlotGainIm,
    kSlotTiltMagFirst,
    kSlotTiltMagLast,
    kSlotTiltPhase,
};

// Site-level draw, constant across the area. Used for the delay skeleton:
// excess delays must not drift with position, because a drift of even a
// nanosecond spins the per-path carrier phase several full turns and
// decorrelates the response between neighbouring points. Gains may breathe
// with position; delays may not.
double site_normal(std::uint64_t scenario_seed, int path, int slot) {
    std::uint64_t h = detail::splitmix64(scenario_seed ^ detail::fnv1a64("paths.site"));
    h = detail::splitmix64(h ^ (static_cast<std::uint64_t>(path) * 0x100000001b3ULL +
                                static_cast<std::uint64_t>(slot)));
    return Rng(h).normal();
}

} // namespace

Scenario gen_scenario(const ScenarioConfig& cfg) {
    if (cfg.area.width() <= 0.0 || cfg.area.height() <= 0.0)
        throw std::invalid_argument("gen_scenario: degenerate area");
    if (cfg.rp_count < 1)
        throw std::invalid_argument("gen_scenario: rp_count must be >= 1");
    if (cfg.tp_count < 0)
        throw std::invalid_argument("gen_scenario: tp_count must be >= 0");

    Scenario sc;
    sc.area = cfg.area;
    sc.ap_location = cfg.ap_location;
    sc.rng_seed = cfg.seed;

    // RPs on cell centers of a rows x cols grid spanning the area.
    auto [rows, cols] = grid_shape(cfg.rp_count);
    double dx = cfg.area.width() / static_cast<double>(cols);
    double dy = cfg.area.height() / static_cast<double>(rows);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            sc.reference_points.push_back({cfg.area.x_min + (c + 0.5) * dx,
                                           cfg.area.y_min + (r + 0.5) * dy});

    Rng rng = Rng(cfg.seed).fork("scenario.tp");
    for (int t = 0; t < cfg.tp_count; ++t)
        sc.test_points.push_back({rng.uniform(cfg.area.x_min, cfg.area.x_max),
                                  rng.uniform(cfg.area.y_min, cfg.area.y_max)});
    return sc;
}

PathSet gen_paths(const Scenario& scenario, const Location& loc,
                  const std::vector<BandSpec>& bands, const PathModelConfig& cfg,
                  Rng& /*observation stream; unused, see header*/) {
    if (!scenario.area.contains(loc))
        throw std::invalid_argument("gen_paths: location outside scenario area");
    if (cfg.p_count < 1)
        throw std::invalid_argument("gen_paths: p_count must be >= 1");
    if (cfg.coherence_m <= 0.0)
        throw std::invalid_argument("gen_paths: coherence_m must be > 0");
    if (bands.empty())
        throw std::invalid_argument("gen_paths: band list empty");

    // Unambiguous delay range is set by the finest subcarrier spacing.
    double max_tau = std::numeric_limits<double>::infinity();
    for (const BandSpec& b : bands) {
        b.validate();
        max_tau = std::min(max_tau, 1.0 / b.subcarrier_spacing_hz());
    }

    const double d = std::max(distance(scenario.ap_location, loc), 1e-3);
    const double tau_los = d / kSpeedOfLight;
    const double los_amp = 1.0 / d; // inverse-distance amplitude decay
    const double max_excess = max_tau - tau_los;
    if (max_excess <= 0.0)
        throw std::invalid_argument("gen_paths: LOS delay outside the unambiguous range");
    const int n_bands = static_cast<int>(bands.size());

    const PathField field(scenario.rng_seed, scenario.area, cfg.coherence_m);
    auto coherent_uniform = [&](int p, int slot) {
        return std_normal_cdf(field.normal(p, slot, loc));
    };

    // Smooth per-path frequency tilt: magnitude interpolates between two
    // draws, phase drifts linearly across the band ladder.
    auto band_tilt = [&](double mag_first, double mag_last, double phase_drift,
                         int band_pos) -> cd {
        double t = n_bands > 1
                       ? static_cast<double>(band_pos) / static_cast<double>(n_bands - 1)
                       : 0.0;
        double mag = mag_first + (mag_last - mag_first) * t;
        return std::polar(mag, phase_drift * t);
    };

    const double mean_excess = cfg.excess_delay_mean_ns * 1e-9;
    const double trunc_mass = -std::expm1(-max_excess / mean_excess);

    PathSet ps;
    for (int p = 0; p < cfg.p_count; ++p) {
        Path path;
        cd base_gain;
        if (p == 0) {
            path.tau_s = tau_los;
            base_gain = cd(los_amp, 0.0);
        } else {
            // Truncated-exponential excess delay keeps tau inside the
            // unambiguous range without rejection. Drawn at site level, not
            // from the location field: see site_normal.
            const double u = std_normal_cdf(site_normal(scenario.rng_seed, p, kSlotDelay));
            const double excess = -mean_excess * std::log1p(-u * trunc_mass);
            path.tau_s = tau_los + excess;
            const double power = los_amp * los_amp * cfg.nlos_power_scale *
                                 std::exp(-excess / (cfg.power_decay_ns * 1e-9));
            const double s = std::sqrt(power / 2.0);
            base_gain = cd(s * field.normal(p, kSlotGainRe, loc),
                           s * field.normal(p, kSlotGainIm, loc));
        }
        const double mag_span = cfg.band_tilt_mag_max - cfg.band_tilt_mag_min;
        const double mag_first =
            cfg.band_tilt_mag_min + mag_span * coherent_uniform(p, kSlotTiltMagFirst);
        const double mag_last =
            cfg.band_tilt_mag_min + mag_span * coherent_uniform(p, kSlotTiltMagLast);
        const double phase_drift =
            cfg.band_tilt_phase_max_rad * (2.0 * coherent_uniform(p, kSlotTiltPhase) - 1.0);
        for (int bi = 0; bi < n_bands; ++bi)
            path.alpha[bands[bi].band_index] =
                base_gain * band_tilt(mag_first, mag_last, phase_drift, bi);
        ps.paths.push_back(std::move(path));
    }
    return ps;
}

CsiVector channel_response(const PathSet& paths, const BandSpec& band) {
    band.validate();
    if (paths.paths.empty())
        throw std::invalid_argument("channel_response: empty path set");

    CsiVector csi;
    csi.band = band;
    csi.n_antennas = 1;
    csi.values.assign(static_cast<size_t>(band.n_subcarriers), cd(0.0, 0.0));

    for (const Path& p : paths.paths) {
        auto it = p.alpha.find(band.band_index);
        if (it == p.alpha.end())
            throw std::invalid_argument("channel_response: path has no gain for band " +
                                        std::to_string(band.band_index));
        const cd gain = it->second;
        for (int k = 0; k < band.n_subcarriers; ++k) {
            double phase = -2.0 * M_PI * band.subcarrier_freq_hz(k) * p.tau_s;
            csi.values[static_cast<size_t>(k)] += gain * std::polar(1.0, phase);
        }
    }
    return csi;
}

CsiVector observe_csi(const CsiVector& true_csi, double snr_db, bool corrupt_phase,
                      Rng& rng) {
    true_csi.validate();
    if (std::isnan(snr_db))
        throw std::invalid_argument("observe_csi: snr_db must not be NaN");

    CsiVector out = true_csi;
    if (!std::isinf(snr_db)) {
        double energy = 0.0;
        for (const cd& v : true_csi.values)
            energy += std::norm(v);
        double noise_var = energy / (static_cast<double>(true_csi.values.size()) *
                                     std::pow(10.0, snr_db / 10.0));
        for (cd& v : out.values)
            v += rng.complex_normal(noise_var);
    }
    if (corrupt_phase) {
        // One oscillator per receiver: the same ramp hits every antenna block.
        double slope = rng.uniform(-M_PI / 16.0, M_PI / 16.0); // rad per subcarrier
        double offset = rng.uniform(-M_PI, M_PI);
        int n_sc = out.band.n_subcarriers;
        for (int a = 0; a < out.n_antennas; ++a)
            for (int k = 0; k < n_sc; ++k)
                out.values[static_cast<size_t>(a * n_sc + k)] *=
                    std::polar(1.0, slope * k + offset);
    }
    return out;
}

CsiVector sanitize_phase(const CsiVector& csi) {
    csi.validate();
    const int n_sc = csi.band.n_subcarriers;
    if (n_sc < 2)
        throw std::invalid_argument("sanitize_phase: need at least 2 subcarriers");

    CsiVector out = csi;
    std::vector<double> phase(static_cast<size_t>(n_sc));
    for (int a = 0; a < csi.n_antennas; ++a) {
        const size_t base = static_cast<size_t>(a) * static_cast<size_t>(n_sc);

        // unwrap phase over subcarrier index
        phase[0] = std::arg(csi.values[base]);
        for (int k = 1; k < n_sc; ++k) {
            double d = std::arg(csi.values[base + k]) - std::arg(csi.values[base + k - 1]);
            d -= 2.0 * M_PI * std::round(d / (2.0 * M_PI));
            phase[static_cast<size_t>(k)] = phase[static_cast<size_t>(k - 1)] + d;
        }

        // least-squares line fit over k = 0..n_sc-1
        double n = static_cast<double>(n_sc);
        double sum_k = 0.0, sum_kk = 0.0, sum_p = 0.0, sum_kp = 0.0;
        for (int k = 0; k < n_sc; ++k) {
            sum_k += k;
            sum_kk += static_cast<double>(k) * k;
            sum_p += phase[static_cast<size_t>(k)];
            sum_kp += k * phase[static_cast<size_t>(k)];
        }
        double denom = n * sum_kk - sum_k * sum_k;
        double slope = (n * sum_kp - sum_k * sum_p) / denom;
        double intercept = (sum_p - slope * sum_k) / n;

        for (int k = 0; k < n_sc; ++k) {
            double amp = std::abs(csi.values[base + k]);
            double new_phase = phase[static_cast<size_t>(k)] - (slope * k + intercept);
            out.values[base + k] = std::polar(amp, new_phase);
        }
    }
    return out;
}

std::vector<BandSpec> make_band_ladder(double first_center_hz, double step_hz,
                                       double bandwidth_hz, int n_subcarriers,
                                       int n_bands) {
    std::vector<BandSpec> bands;
    for (int n = 0; n < n_bands; ++n) {
        BandSpec b;
        b.band_index = n + 1;
        b.center_freq_hz = first_center_hz + step_hz * n;
        b.bandwidth_hz = bandwidth_hz;
        b.n_subcarriers = n_subcarriers;
        b.validate();
        bands.push_back(b);
    }
    return bands;
}

} // namespace bandloc

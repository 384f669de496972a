#pragma once

#include "bandloc/types.hpp"

namespace bandloc {

struct ScenarioConfig {
    Rect area{0.0, 4.0, 0.0, 4.0};
    int rp_count = 16;
    int tp_count = 11;
    Location ap_location{0.0, 0.0}; // corner of the default area
    std::uint64_t seed = 1;
};

/// Parametric multipath model. Path 1 is the line-of-sight path; the remaining
/// paths carry exponentially distributed excess delays and complex Gaussian
/// gains whose power decays exponentially with excess delay. Each path also
/// gets a smooth per-band frequency tilt so bands are correlated but not
/// linearly related. Excess delays are a site-level skeleton (constant across
/// the area, like cluster delays that persist over a room); gains and tilts
/// are drawn from spatially coherent fields anchored to the scenario seed,
/// so locations much closer than coherence_m see nearly the same channel and
/// locations a few coherence lengths apart fade independently. This is what
/// makes fingerprints at reference points informative about nearby test
/// points: delays drifting with position would spin per-path carrier phase
/// full turns within centimetres.
struct PathModelConfig {
    int p_count = 8;
    double power_decay_ns = 30.0;      // exponential power-decay constant
    double excess_delay_mean_ns = 50.0;
    double nlos_power_scale = 1.0;     // NLOS power at zero excess delay, relative to LOS
    double band_tilt_mag_min = 0.8;    // per-band magnitude factor range
    double band_tilt_mag_max = 1.2;
    double band_tilt_phase_max_rad = M_PI / 8.0; // max phase drift across all bands
    double coherence_m = 2.0;          // spatial correlation length of the path fields
};

/// Lays RPs out on a regular grid spanning the area and samples TPs uniformly
/// inside it. Deterministic for a fixed cfg.seed.
/// Throws std::invalid_argument on degenerate areas or bad counts.
Scenario gen_scenario(const ScenarioConfig& cfg);

/// The multipath layout at a location. A frozen property of the site: fully
/// determined by (scenario.rng_seed, loc), continuous in loc, identical across
/// repeated draws. The caller's stream is reserved for per-observation effects
/// (see observe_csi) and is not consumed here.
PathSet gen_paths(const Scenario& scenario, const Location& loc,
                  const std::vector<BandSpec>& bands, const PathModelConfig& cfg,
                  Rng& rng);

/// H_k = sum_p alpha_p(band) * exp(-j 2 pi f_k tau_p), with f_k the absolute
/// subcarrier frequency. Throws if a path has no gain for this band.
CsiVector channel_response(const PathSet& paths, const BandSpec& band);

/// Adds per-subcarrier complex Gaussian noise with total power
/// ||H||^2 / 10^(snr_db/10). snr_db = +inf returns the input unchanged.
/// With corrupt_phase set, multiplies each antenna block by exp(j(a*k + b))
/// with a random slope a (SFO) and offset b (CFO), shared across antennas.
CsiVector observe_csi(const CsiVector& true_csi, double snr_db, bool corrupt_phase,
                      Rng& rng);

/// Removes the best-fit linear phase ramp (slope and intercept of the
/// unwrapped phase over subcarrier index), independently per antenna block.
/// Amplitudes are preserved. Requires at least 2 subcarriers.
CsiVector sanitize_phase(const CsiVector& csi);

/// Convenience: a ladder of equal-width contiguous bands.
std::vector<BandSpec> make_band_ladder(double first_center_hz, double step_hz,
                                       double bandwidth_hz, int n_subcarriers,
                                       int n_bands);

} // namespace bandloc

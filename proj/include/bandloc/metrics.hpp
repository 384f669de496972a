#pragma once

#include "bandloc/types.hpp"

#include <Eigen/Dense>

namespace bandloc {

/// Floor applied to -inf CCNE values when aggregating.
constexpr double kCcneFloorDb = -200.0;

/// Channel coefficient normalized error in dB:
///   10 * log10(||pred - truth||^2 / ||truth||^2)
/// Returns -inf when pred == truth exactly. Throws on zero-norm truth or
/// shape mismatch.
double ccne_db(const CsiVector& pred, const CsiVector& truth);

/// Raw-vector form used by tests and aggregation helpers.
double ccne_db(const std::vector<cd>& pred, const std::vector<cd>& truth);

/// Replaces -inf by kCcneFloorDb so means stay finite.
inline double ccne_floored(double v) { return std::isinf(v) && v < 0 ? kCcneFloorDb : v; }

/// Mean of per-sample dB values (with the -inf floor applied).
double mean_ccne_db(const std::vector<double>& per_sample_db);

struct ElboComponents {
    double recon; // Gaussian log-likelihood up to constants: -1/2 ||pred-target||^2
    double kl;    // 1/2 sum_d (-logvar + mu^2 + exp(logvar) - 1)
    double elbo;  // recon - kl
};

ElboComponents elbo_components(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                               const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

/// KL(N(mu, exp(logvar)) || N(0, I)) alone; always >= 0.
double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

struct CrlbInputs {
    double effective_bandwidth_hz = 0.0; // beta
    double snr_linear = 0.0;             // E_p / N_0
    double speed_of_light = kSpeedOfLight;
    double predicted_band_quality = 0.0; // weight in [0,1] for the predicted band
};

/// Ranging-error bound c^2 / (8 pi^2 beta^2 SNR), in m^2.
double crlb_single(const CrlbInputs& in);

/// Spliced-channel bound with effective bandwidth beta*(1 + weight).
/// Always <= crlb_single for weight in [0,1].
double crlb_spliced(double beta_hz, double predicted_weight, double snr_linear);

/// RMS bandwidth of the band's uniform subcarrier grid:
/// sqrt(mean_k (f_k - mean f)^2).
double effective_bandwidth_hz(const BandSpec& band);

/// Default quality proxy for the predicted band: 10^(ccne_db/10) clamped
/// to [0,1].
double crlb_weight_from_ccne(double ccne_db_value);

/// Aggregate quantitative results for one experiment run / scheme.
struct MetricsReport {
    std::string scheme;
    double snr_db = 0.0;
    std::uint64_t seed = 0;

    std::vector<double> ccne_per_sample_db;
    double ccne_mean_db = 0.0;

    std::vector<double> loc_sq_err_m2; // per-sample ||L_hat - L||^2
    double loc_mse_m2 = 0.0;
    double loc_rmse_m = 0.0;

    bool has_crlb = false;
    double crlb_m2 = 0.0;

    size_t ccne_sample_count() const { return ccne_per_sample_db.size(); }
    size_t loc_sample_count() const { return loc_sq_err_m2.size(); }

    /// Recomputes the aggregate fields from the per-sample vectors.
    void finalize();
};

} // namespace bandloc

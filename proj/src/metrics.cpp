#include "bandloc/metrics.hpp"

namespace bandloc {

double ccne_db(const std::vector<cd>& pred, const std::vector<cd>& truth) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("ccne: shape mismatch");
    double err = 0.0, ref = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        err += std::norm(pred[i] - truth[i]);
        ref += std::norm(truth[i]);
    }
    if (ref <= 0.0)
        throw std::invalid_argument("ccne: zero-norm truth");
    if (err == 0.0)
        return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(err / ref);
}

double ccne_db(const CsiVector& pred, const CsiVector& truth) {
    if (pred.band.band_index != truth.band.band_index ||
        pred.n_antennas != truth.n_antennas)
        throw std::invalid_argument("ccne: band/antenna mismatch");
    return ccne_db(pred.values, truth.values);
}

double mean_ccne_db(const std::vector<double>& per_sample_db) {
    if (per_sample_db.empty())
        throw std::invalid_argument("mean_ccne_db: empty sample set");
    double sum = 0.0;
    for (double v : per_sample_db)
        sum += ccne_floored(v);
    return sum / static_cast<double>(per_sample_db.size());
}

double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
    if (mu.size() != logvar.size())
        throw std::invalid_argument("kl_divergence: shape mismatch");
    double kl = 0.0;
    for (Eigen::Index d = 0; d < mu.size(); ++d)
        kl += 0.5 * (-logvar[d] + mu[d] * mu[d] + std::exp(logvar[d]) - 1.0);
    return kl;
}

ElboComponents elbo_components(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                               const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
    if (pred.size() != target.size())
        throw std::invalid_argument("elbo_components: pred/target shape mismatch");
    if (!pred.allFinite() || !target.allFinite() || !mu.allFinite() || !logvar.allFinite())
        throw std::invalid_argument("elbo_components: non-finite input");

    ElboComponents out;
    out.recon = -0.5 * (pred - target).squaredNorm();
    out.kl = kl_divergence(mu, logvar);
    out.elbo = out.recon - out.kl;
    return out;
}

double crlb_single(const CrlbInputs& in) {
    if (in.effective_bandwidth_hz <= 0.0)
        throw std::invalid_argument("crlb_single: effective bandwidth must be > 0");
    if (in.snr_linear <= 0.0)
        throw std::invalid_argument("crlb_single: SNR must be > 0");
    double beta2 = in.effective_bandwidth_hz * in.effective_bandwidth_hz;
    return (in.speed_of_light * in.speed_of_light) /
           (8.0 * M_PI * M_PI * beta2 * in.snr_linear);
}

double crlb_spliced(double beta_hz, double predicted_weight, double snr_linear) {
    if (predicted_weight < 0.0 || predicted_weight > 1.0)
        throw std::invalid_argument("crlb_spliced: weight must be in [0,1]");
    CrlbInputs in;
    in.effective_bandwidth_hz = beta_hz * (1.0 + predicted_weight);
    in.snr_linear = snr_linear;
    return crlb_single(in);
}

double effective_bandwidth_hz(const BandSpec& band) {
    band.validate();
    const int n = band.n_subcarriers;
    double mean = 0.0;
    for (int k = 0; k < n; ++k)
        mean += band.subcarrier_freq_hz(k);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int k = 0; k < n; ++k) {
        double d = band.subcarrier_freq_hz(k) - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(n));
}

double crlb_weight_from_ccne(double ccne_db_value) {
    double w = std::pow(10.0, ccne_db_value / 10.0);
    return std::min(std::max(w, 0.0), 1.0);
}

void MetricsReport::finalize() {
    if (!ccne_per_sample_db.empty())
        ccne_mean_db = mean_ccne_db(ccne_per_sample_db);
    if (!loc_sq_err_m2.empty()) {
        double sum = 0.0;
        for (double e : loc_sq_err_m2)
            sum += e;
        loc_mse_m2 = sum / static_cast<double>(loc_sq_err_m2.size());
        loc_rmse_m = std::sqrt(loc_mse_m2);
    }
}

} // namespace bandloc

#include "bandloc/baselines.hpp"

#include "bandloc/serial.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bandloc {

using json = nlohmann::json;

void MlpPredictor::validate() const {
    net.validate();
    if (net.input_dim() != 2 * source_band.n_subcarriers * n_antennas)
        throw std::invalid_argument("MlpPredictor: input does not match source band");
    if (net.output_dim() != 2 * target_band.n_subcarriers * n_antennas)
        throw std::invalid_argument("MlpPredictor: output does not match target band");
}

MlpTrainResult train_mlp_predictor(const Database& train_db, int source_band,
                                   int target_band, const nn::TrainConfig& cfg) {
    if (cfg.epochs < 0) throw std::invalid_argument("train_mlp_predictor: negative epochs");
    if (cfg.batch_size <= 0)
        throw std::invalid_argument("train_mlp_predictor: batch_size must be > 0");

    const Eigen::MatrixXd x_src_raw = band_feature_matrix(train_db, source_band);
    const Eigen::MatrixXd x_tgt_raw = band_feature_matrix(train_db, target_band);
    const Eigen::Index n = x_src_raw.cols();

    MlpTrainResult result;
    result.model.source_band = train_db.band(source_band);
    result.model.target_band = train_db.band(target_band);
    result.model.n_antennas = train_db.n_antennas();
    result.model.source_norm = compute_feature_norm(x_src_raw);
    result.model.target_norm = compute_feature_norm(x_tgt_raw);

    Rng root(cfg.seed);
    Rng init_rng = root.fork("mlp.init");
    result.model.net = nn::make_mlp({static_cast<int>(x_src_raw.rows()), 64, 64,
                                     static_cast<int>(x_tgt_raw.rows())},
                                    nn::Activation::leaky_relu, nn::Activation::identity,
                                    0.0, init_rng);

    const Eigen::MatrixXd x_src = result.model.source_norm.apply(x_src_raw);
    const Eigen::MatrixXd x_tgt = result.model.target_norm.apply(x_tgt_raw);

    nn::AdamState adam = nn::make_adam(result.model.net, cfg.learning_rate);
    Rng shuffle_rng = root.fork("mlp.shuffle");
    result.model.net.mode = nn::RunMode::train;

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_mse = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(x_src.rows(), b), yb(x_tgt.rows(), b);
            for (Eigen::Index i = 0; i < b; ++i) {
                xb.col(i) = x_src.col(order[static_cast<size_t>(start + i)]);
                yb.col(i) = x_tgt.col(order[static_cast<size_t>(start + i)]);
            }
            nn::ForwardCache cache;
            const Eigen::MatrixXd pred = nn::forward(result.model.net, xb, &cache, nullptr);
            const double mse = (pred - yb).squaredNorm() / static_cast<double>(b);
            if (!std::isfinite(mse)) throw nn::TrainingDivergedError(epoch);
            const Eigen::MatrixXd dpred = 2.0 / static_cast<double>(b) * (pred - yb);
            nn::Gradients grads = nn::backward(result.model.net, cache, dpred);
            nn::adam_step(result.model.net, grads, adam);
            epoch_mse += mse * static_cast<double>(b) / static_cast<double>(n);
        }
        result.epoch_mse.push_back(epoch_mse);
    }

    result.model.net.mode = nn::RunMode::infer;
    return result;
}

CsiVector predict_mlp(const MlpPredictor& model, const CsiVector& csi_source) {
    if (csi_source.band.band_index != model.source_band.band_index ||
        csi_source.band.n_subcarriers != model.source_band.n_subcarriers ||
        csi_source.n_antennas != model.n_antennas)
        throw std::invalid_argument("csi does not match the predictor's source band");
    const Eigen::VectorXd x = model.source_norm.apply(csi_to_features(csi_source));
    const Eigen::VectorXd y = nn::forward(model.net, x);
    return features_to_csi(model.target_norm.invert(y), model.target_band, model.n_antennas);
}

namespace {
constexpr char kMlpPredMagic[] = "BLOCMLB\x01";
constexpr std::uint32_t kMlpPredVersion = 1;

void write_norm(PayloadWriter& w, const FeatureNorm& norm) {
    w.put_u64(static_cast<std::uint64_t>(norm.mean.size()));
    w.put_f64_array(norm.mean.data(), static_cast<size_t>(norm.mean.size()));
    w.put_f64_array(norm.stddev.data(), static_cast<size_t>(norm.stddev.size()));
}

FeatureNorm read_norm(PayloadReader& r) {
    FeatureNorm norm;
    const auto n = static_cast<Eigen::Index>(r.get_u64());
    norm.mean.resize(n);
    r.get_f64_array(norm.mean.data(), static_cast<size_t>(n));
    norm.stddev.resize(n);
    r.get_f64_array(norm.stddev.data(), static_cast<size_t>(n));
    return norm;
}
} // namespace

void save_mlp_predictor(const std::string& path, const MlpPredictor& model) {
    model.validate();
    Envelope env;
    env.magic = kMlpPredMagic;
    env.version = kMlpPredVersion;

    json meta;
    meta["kind"] = "mlp_predictor";
    meta["n_antennas"] = model.n_antennas;
    meta["source_band"] = model.source_band;
    meta["target_band"] = model.target_band;
    meta["net"] = json::object();

    PayloadWriter w(env.payload);
    nn::write_mlp(w, meta["net"], model.net);
    write_norm(w, model.source_norm);
    write_norm(w, model.target_norm);
    env.meta = meta.dump();
    write_envelope(path, env);
}

MlpPredictor load_mlp_predictor(const std::string& path) {
    Envelope env = read_envelope(path, kMlpPredMagic, kMlpPredVersion);
    json meta = json::parse(env.meta);

    MlpPredictor model;
    model.n_antennas = meta.at("n_antennas").get<int>();
    model.source_band = meta.at("source_band").get<BandSpec>();
    model.target_band = meta.at("target_band").get<BandSpec>();

    PayloadReader r(env.payload);
    model.net = nn::read_mlp(r, meta.at("net"));
    model.source_norm = read_norm(r);
    model.target_norm = read_norm(r);
    model.validate();
    return model;
}

void ArEkfConfig::validate() const {
    if (ar_order < 1) throw std::invalid_argument("ArEkfConfig: ar_order must be >= 1");
    if (process_noise <= 0.0 || observation_noise <= 0.0 || init_covariance <= 0.0)
        throw std::invalid_argument("ArEkfConfig: variances must be > 0");
}

namespace {

/// Minimum-norm least-squares AR coefficients for h[t] = sum_j a_j h[t-j].
Eigen::VectorXcd fit_ar(const std::vector<cd>& h, int q) {
    const int n = static_cast<int>(h.size());
    if (n < q + 1)
        throw SingularArSystemError(
            "ar fit: sequence of length " + std::to_string(n) + " cannot support order " +
            std::to_string(q) + "; try a lower ar_order");

    Eigen::MatrixXcd design(n - q, q);
    Eigen::VectorXcd rhs(n - q);
    for (int t = q; t < n; ++t) {
        rhs[t - q] = h[static_cast<size_t>(t)];
        for (int j = 1; j <= q; ++j)
            design(t - q, j - 1) = h[static_cast<size_t>(t - j)];
    }
    if (design.norm() == 0.0)
        throw SingularArSystemError(
            "ar fit: zero input signal has no autoregressive structure; try a lower "
            "ar_order or a different source band");

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(design);
    if (cod.rank() == 0)
        throw SingularArSystemError("ar fit: design matrix is singular; try a lower ar_order");
    return cod.solve(rhs);
}

/// Real 2q-state embedding of the complex AR recursion:
/// state = [Re h_t .. Re h_{t-q+1}, Im h_t .. Im h_{t-q+1}].
Eigen::MatrixXd ar_transition(const Eigen::VectorXcd& coeffs) {
    const int q = static_cast<int>(coeffs.size());
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2 * q, 2 * q);
    for (int j = 0; j < q; ++j) {
        f(0, j) = coeffs[j].real();
        f(0, q + j) = -coeffs[j].imag();
        f(q, j) = coeffs[j].imag();
        f(q, q + j) = coeffs[j].real();
    }
    for (int i = 1; i < q; ++i) {
        f(i, i - 1) = 1.0;
        f(q + i, q + i - 1) = 1.0;
    }
    return f;
}

std::vector<cd> extrapolate_antenna(const std::vector<cd>& h, const ArEkfConfig& cfg,
                                    int gap_steps, int n_out) {
    const int q = cfg.ar_order;
    const Eigen::VectorXcd coeffs = fit_ar(h, q);
    const Eigen::MatrixXd f = ar_transition(coeffs);
    const int dim = 2 * q;

    Eigen::VectorXd state(dim);
    for (int j = 0; j < q; ++j) {
        state[j] = h[static_cast<size_t>(q - 1 - j)].real();
        state[q + j] = h[static_cast<size_t>(q - 1 - j)].imag();
    }
    Eigen::MatrixXd cov = cfg.init_covariance * Eigen::MatrixXd::Identity(dim, dim);
    const Eigen::MatrixXd proc = cfg.process_noise * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd obs_map = Eigen::MatrixXd::Zero(2, dim);
    obs_map(0, 0) = 1.0;
    obs_map(1, q) = 1.0;
    const Eigen::Matrix2d obs_noise =
        cfg.observation_noise * Eigen::Matrix2d::Identity();

    for (size_t t = static_cast<size_t>(q); t < h.size(); ++t) {
        state = f * state;
        cov = f * cov * f.transpose() + proc;
        const Eigen::Vector2d z(h[t].real(), h[t].imag());
        const Eigen::Vector2d innovation = z - obs_map * state;
        const Eigen::Matrix2d s = obs_map * cov * obs_map.transpose() + obs_noise;
        const Eigen::MatrixXd gain = cov * obs_map.transpose() * s.inverse();
        state += gain * innovation;
        cov = (Eigen::MatrixXd::Identity(dim, dim) - gain * obs_map) * cov;
    }

    std::vector<cd> out;
    out.reserve(static_cast<size_t>(n_out));
    for (int step = 0; step < gap_steps + n_out; ++step) {
        state = f * state;
        if (step >= gap_steps) out.emplace_back(state[0], state[q]);
    }
    return out;
}

} // namespace

CsiVector ar_ekf_predict(const CsiVector& csi_source, const ArEkfConfig& cfg,
                         const BandSpec& target_band) {
    cfg.validate();
    csi_source.validate();
    target_band.validate();
    const BandSpec& src = csi_source.band;

    const double spacing = src.subcarrier_spacing_hz();
    if (std::abs(target_band.subcarrier_spacing_hz() - spacing) > 1e-6 * spacing)
        throw std::invalid_argument("ar_ekf_predict: subcarrier spacing mismatch");

    const bool upward = target_band.center_freq_hz > src.center_freq_hz;
    double gap_hz;
    if (upward)
        gap_hz = target_band.subcarrier_freq_hz(0) -
                 src.subcarrier_freq_hz(src.n_subcarriers - 1);
    else
        gap_hz = src.subcarrier_freq_hz(0) -
                 target_band.subcarrier_freq_hz(target_band.n_subcarriers - 1);
    const int gap_steps = static_cast<int>(std::llround(gap_hz / spacing)) - 1;
    if (gap_steps < 0)
        throw std::invalid_argument("ar_ekf_predict: bands overlap; nothing to extrapolate");

    CsiVector out;
    out.band = target_band;
    out.n_antennas = csi_source.n_antennas;
    out.values.resize(static_cast<size_t>(target_band.n_subcarriers) * csi_source.n_antennas);

    const int n_src = src.n_subcarriers;
    for (int a = 0; a < csi_source.n_antennas; ++a) {
        std::vector<cd> h(csi_source.values.begin() + static_cast<std::ptrdiff_t>(a) * n_src,
                          csi_source.values.begin() +
                              static_cast<std::ptrdiff_t>(a + 1) * n_src);
        if (!upward) std::reverse(h.begin(), h.end());
        std::vector<cd> pred =
            extrapolate_antenna(h, cfg, gap_steps, target_band.n_subcarriers);
        if (!upward) std::reverse(pred.begin(), pred.end());
        std::copy(pred.begin(), pred.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(a) *
                                           target_band.n_subcarriers);
    }
    return out;
}

CsiVector passthrough_band(const FingerprintRecord& record, int band_index) {
    auto it = record.csi.find(band_index);
    if (it == record.csi.end())
        throw std::out_of_range("record has no band " + std::to_string(band_index));
    return it->second;
}

} // namespace bandloc

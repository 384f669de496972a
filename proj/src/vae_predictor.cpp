#include "bandloc/vae_predictor.hpp"

#include "bandloc/serial.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bandloc {

using json = nlohmann::json;

void VaeModel::validate() const {
    encoder.validate();
    decoder.validate();
    if (latent_dim <= 0) throw std::invalid_argument("VaeModel: latent_dim must be > 0");
    if (encoder.output_dim() != 2 * latent_dim)
        throw std::invalid_argument("VaeModel: encoder must emit 2*latent_dim values");
    if (decoder.input_dim() != latent_dim)
        throw std::invalid_argument("VaeModel: decoder must take latent_dim values");
    if (encoder.input_dim() != 2 * source_band.n_subcarriers * n_antennas)
        throw std::invalid_argument("VaeModel: encoder input does not match source band");
    if (decoder.output_dim() != 2 * target_band.n_subcarriers * n_antennas)
        throw std::invalid_argument("VaeModel: decoder output does not match target band");
}

VaeModel make_vae(const BandSpec& source, const BandSpec& target, int n_antennas,
                  int latent_dim, double dropout_rate, Rng& rng) {
    source.validate();
    target.validate();
    if (latent_dim <= 0) throw std::invalid_argument("make_vae: latent_dim must be > 0");
    if (n_antennas <= 0) throw std::invalid_argument("make_vae: n_antennas must be > 0");

    const int in_dim = 2 * source.n_subcarriers * n_antennas;
    const int out_dim = 2 * target.n_subcarriers * n_antennas;

    VaeModel model;
    model.latent_dim = latent_dim;
    model.source_band = source;
    model.target_band = target;
    model.n_antennas = n_antennas;
    Rng enc_rng = rng.fork("vae.encoder");
    Rng dec_rng = rng.fork("vae.decoder");
    model.encoder = nn::make_mlp({in_dim, 64, 64, 2 * latent_dim}, nn::Activation::leaky_relu,
                                 nn::Activation::identity, dropout_rate, enc_rng);
    model.decoder = nn::make_mlp({latent_dim, 50, 64, 64, out_dim},
                                 nn::Activation::leaky_relu, nn::Activation::identity,
                                 dropout_rate, dec_rng);
    return model;
}

namespace {

void check_source_band(const VaeModel& model, const CsiVector& csi) {
    if (csi.band.band_index != model.source_band.band_index ||
        csi.band.n_subcarriers != model.source_band.n_subcarriers ||
        csi.n_antennas != model.n_antennas)
        throw std::invalid_argument("csi does not match the model's source band");
}

} // namespace

void encode(const VaeModel& model, const CsiVector& csi_source, Eigen::VectorXd& mu,
            Eigen::VectorXd& logvar) {
    check_source_band(model, csi_source);
    const Eigen::VectorXd x = model.source_norm.apply(csi_to_features(csi_source));
    const Eigen::VectorXd out = nn::forward(model.encoder, x);
    mu = out.head(model.latent_dim);
    logvar = out.tail(model.latent_dim);
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                               Rng& rng) {
    if (mu.size() != logvar.size())
        throw std::invalid_argument("reparameterize: mu/logvar length mismatch");
    Eigen::VectorXd z(mu.size());
    for (Eigen::Index d = 0; d < mu.size(); ++d)
        z[d] = mu[d] + std::exp(0.5 * logvar[d]) * rng.normal();
    return z;
}

CsiVector decode(const VaeModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.latent_dim)
        throw std::invalid_argument("decode: latent vector has wrong length");
    const Eigen::VectorXd y = nn::forward(model.decoder, z);
    return features_to_csi(model.target_norm.invert(y), model.target_band, model.n_antennas);
}

VaeLoss vae_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                 const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar, double beta) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("vae_loss: pred/target shape mismatch");
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols() ||
        mu.cols() != pred.cols())
        throw std::invalid_argument("vae_loss: mu/logvar shape mismatch");
    if (!pred.allFinite() || !target.allFinite() || !mu.allFinite() || !logvar.allFinite())
        throw std::invalid_argument("vae_loss: non-finite inputs");

    const double batch = static_cast<double>(pred.cols());
    VaeLoss loss;
    loss.recon = (pred - target).squaredNorm() / batch;
    loss.kl = 0.5 *
              (-logvar.array() + mu.array().square() + logvar.array().exp() - 1.0).sum() /
              batch;
    loss.total = loss.recon + beta * loss.kl;
    return loss;
}

VaeGradients vae_backward(VaeModel& model, const Eigen::MatrixXd& x_source_norm,
                          const Eigen::MatrixXd& x_target_norm, const Eigen::MatrixXd& eps,
                          double beta, Rng* dropout_rng) {
    const Eigen::Index batch = x_source_norm.cols();
    if (x_target_norm.cols() != batch || eps.cols() != batch)
        throw std::invalid_argument("vae_backward: batch size mismatch");
    if (eps.rows() != model.latent_dim)
        throw std::invalid_argument("vae_backward: eps has wrong latent dim");

    nn::ForwardCache enc_cache;
    const Eigen::MatrixXd enc_out =
        nn::forward(model.encoder, x_source_norm, &enc_cache, dropout_rng);
    const Eigen::MatrixXd mu = enc_out.topRows(model.latent_dim);
    const Eigen::MatrixXd logvar = enc_out.bottomRows(model.latent_dim);

    const Eigen::MatrixXd sigma = (0.5 * logvar.array()).exp();
    const Eigen::MatrixXd z = mu + sigma.cwiseProduct(eps);

    nn::ForwardCache dec_cache;
    const Eigen::MatrixXd pred = nn::forward(model.decoder, z, &dec_cache, dropout_rng);

    VaeGradients out;
    out.loss = vae_loss(pred, x_target_norm, mu, logvar, beta);

    const double batch_d = static_cast<double>(batch);
    const Eigen::MatrixXd dpred = 2.0 / batch_d * (pred - x_target_norm);
    out.decoder = nn::backward(model.decoder, dec_cache, dpred);

    const Eigen::MatrixXd& dz = out.decoder.dinput;
    Eigen::MatrixXd denc(enc_out.rows(), batch);
    // dL/dmu: through z (identity) plus the KL term beta * mu / batch.
    denc.topRows(model.latent_dim) = dz + (beta / batch_d) * mu;
    // dL/dlogvar: through z (eps * sigma / 2) plus beta * (exp(logvar)-1)/2 / batch.
    denc.bottomRows(model.latent_dim) =
        0.5 * dz.cwiseProduct(eps).cwiseProduct(sigma) +
        (0.5 * beta / batch_d) * (logvar.array().exp() - 1.0).matrix();
    out.encoder = nn::backward(model.encoder, enc_cache, denc);
    return out;
}

VaeTrainResult train_vae(const Database& train_db, int source_band, int target_band,
                         const VaeTrainConfig& cfg) {
    if (cfg.epochs < 0) throw std::invalid_argument("train_vae: negative epochs");
    if (cfg.batch_size <= 0) throw std::invalid_argument("train_vae: batch_size must be > 0");
    if (cfg.beta < 0.0) throw std::invalid_argument("train_vae: beta must be >= 0");

    const Eigen::MatrixXd x_src_raw = band_feature_matrix(train_db, source_band);
    const Eigen::MatrixXd x_tgt_raw = band_feature_matrix(train_db, target_band);
    const Eigen::Index n = x_src_raw.cols();

    Rng root(cfg.seed);
    Rng init_rng = root.fork("vae.init");
    VaeTrainResult result;
    result.model = make_vae(train_db.band(source_band), train_db.band(target_band),
                            train_db.n_antennas(), cfg.latent_dim, cfg.dropout_rate,
                            init_rng);
    result.model.source_norm = compute_feature_norm(x_src_raw);
    result.model.target_norm = compute_feature_norm(x_tgt_raw);

    const Eigen::MatrixXd x_src = result.model.source_norm.apply(x_src_raw);
    const Eigen::MatrixXd x_tgt = result.model.target_norm.apply(x_tgt_raw);

    nn::AdamState enc_adam = nn::make_adam(result.model.encoder, cfg.learning_rate);
    nn::AdamState dec_adam = nn::make_adam(result.model.decoder, cfg.learning_rate);
    Rng shuffle_rng = root.fork("vae.shuffle");
    Rng eps_rng = root.fork("vae.eps");
    Rng dropout_rng = root.fork("vae.dropout");

    result.model.encoder.mode = nn::RunMode::train;
    result.model.decoder.mode = nn::RunMode::train;

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        VaeLoss epoch_loss;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(x_src.rows(), b), yb(x_tgt.rows(), b);
            for (Eigen::Index i = 0; i < b; ++i) {
                xb.col(i) = x_src.col(order[static_cast<size_t>(start + i)]);
                yb.col(i) = x_tgt.col(order[static_cast<size_t>(start + i)]);
            }
            Eigen::MatrixXd eps(cfg.latent_dim, b);
            for (Eigen::Index c = 0; c < b; ++c)
                for (int d = 0; d < cfg.latent_dim; ++d) eps(d, c) = eps_rng.normal();

            VaeGradients grads =
                vae_backward(result.model, xb, yb, eps, cfg.beta, &dropout_rng);
            if (!std::isfinite(grads.loss.total))
                throw nn::TrainingDivergedError(epoch);
            nn::adam_step(result.model.encoder, grads.encoder, enc_adam);
            nn::adam_step(result.model.decoder, grads.decoder, dec_adam);

            const double w = static_cast<double>(b) / static_cast<double>(n);
            epoch_loss.total += w * grads.loss.total;
            epoch_loss.recon += w * grads.loss.recon;
            epoch_loss.kl += w * grads.loss.kl;
        }
        if (!std::isfinite(epoch_loss.total)) throw nn::TrainingDivergedError(epoch);
        result.epoch_history.push_back(epoch_loss);
    }

    result.model.encoder.mode = nn::RunMode::infer;
    result.model.decoder.mode = nn::RunMode::infer;
    return result;
}

CsiVector predict_band(const VaeModel& model, const CsiVector& csi_source, PredictMode mode,
                       Rng* rng) {
    Eigen::VectorXd mu, logvar;
    encode(model, csi_source, mu, logvar);
    if (mode == PredictMode::mean) return decode(model, mu);
    if (!rng) throw std::invalid_argument("predict_band: sample mode needs an rng");
    return decode(model, reparameterize(mu, logvar, *rng));
}

namespace {
constexpr char kVaeMagic[] = "BLOCVAE\x01";
constexpr std::uint32_t kVaeVersion = 1;

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

void save_vae(const std::string& path, const VaeModel& model) {
    model.validate();
    Envelope env;
    env.magic = kVaeMagic;
    env.version = kVaeVersion;

    json meta;
    meta["kind"] = "vae";
    meta["latent_dim"] = model.latent_dim;
    meta["n_antennas"] = model.n_antennas;
    meta["source_band"] = model.source_band;
    meta["target_band"] = model.target_band;
    meta["encoder"] = json::object();
    meta["decoder"] = json::object();

    PayloadWriter w(env.payload);
    nn::write_mlp(w, meta["encoder"], model.encoder);
    nn::write_mlp(w, meta["decoder"], model.decoder);
    write_norm(w, model.source_norm);
    write_norm(w, model.target_norm);
    env.meta = meta.dump();
    write_envelope(path, env);
}

VaeModel load_vae(const std::string& path) {
    Envelope env = read_envelope(path, kVaeMagic, kVaeVersion);
    json meta = json::parse(env.meta);

    VaeModel model;
    model.latent_dim = meta.at("latent_dim").get<int>();
    model.n_antennas = meta.at("n_antennas").get<int>();
    model.source_band = meta.at("source_band").get<BandSpec>();
    model.target_band = meta.at("target_band").get<BandSpec>();

    PayloadReader r(env.payload);
    model.encoder = nn::read_mlp(r, meta.at("encoder"));
    model.decoder = nn::read_mlp(r, meta.at("decoder"));
    model.source_norm = read_norm(r);
    model.target_norm = read_norm(r);
    model.validate();
    return model;
}

} // namespace bandloc

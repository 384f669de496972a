#pragma once

#include "bandloc/features.hpp"
#include "bandloc/fingerprint_store.hpp"
#include "bandloc/tensor_nn.hpp"

namespace bandloc {

/// Cross-band predictor: encoder maps source-band features to a latent
/// Gaussian, decoder expands a latent draw to target-band features.
struct VaeModel {
    nn::MlpModel encoder; // 2*N_sc*i -> 64 -> 64 -> 2*latent_dim (mu, logvar)
    nn::MlpModel decoder; // latent_dim -> 50 -> 64 -> 64 -> 2*N_sc*i
    int latent_dim = 25;
    BandSpec source_band;
    BandSpec target_band;
    int n_antennas = 1;
    FeatureNorm source_norm;
    FeatureNorm target_norm;

    void validate() const;
};

/// Table-default hyperparameters: lr 1e-5, 50 epochs, beta 0.1.
struct VaeTrainConfig : nn::TrainConfig {
    int latent_dim = 25;
    double dropout_rate = 0.0;
};

VaeModel make_vae(const BandSpec& source, const BandSpec& target, int n_antennas,
                  int latent_dim, double dropout_rate, Rng& rng);

/// Normalized-feature encoding of one CSI vector. Throws on band mismatch.
void encode(const VaeModel& model, const CsiVector& csi_source, Eigen::VectorXd& mu,
            Eigen::VectorXd& logvar);

/// z = mu + exp(logvar / 2) .* eps, eps ~ N(0, I).
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                               Rng& rng);

/// Decodes a latent vector to a de-normalized complex CSI on the target band.
CsiVector decode(const VaeModel& model, const Eigen::VectorXd& z);

struct VaeLoss {
    double total = 0.0;
    double recon = 0.0; // mean over batch of ||pred - target||^2 (normalized features)
    double kl = 0.0;    // mean over batch of 1/2 sum_d(-logvar + mu^2 + exp(logvar) - 1)
};

/// Batched loss; columns are samples. total = recon + beta * kl exactly.
/// Throws std::invalid_argument on shape mismatch or non-finite inputs.
VaeLoss vae_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                 const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar, double beta);

struct VaeGradients {
    nn::Gradients encoder;
    nn::Gradients decoder;
    VaeLoss loss;
};

/// One forward/backward pass with the noise draw eps held fixed. Exposed so
/// the gradient path (decoder -> reparameterization -> encoder, plus the KL
/// term) can be finite-difference checked end to end.
VaeGradients vae_backward(VaeModel& model, const Eigen::MatrixXd& x_source_norm,
                          const Eigen::MatrixXd& x_target_norm, const Eigen::MatrixXd& eps,
                          double beta, Rng* dropout_rng);

struct VaeTrainResult {
    VaeModel model;
    std::vector<VaeLoss> epoch_history; // one entry per epoch (means over batches)
};

/// Trains one source->target predictor on all records of train_db with Adam.
/// Feature normalization statistics are computed on train_db and stored in
/// the model. Non-finite loss aborts with nn::TrainingDivergedError carrying
/// the epoch index.
VaeTrainResult train_vae(const Database& train_db, int source_band, int target_band,
                         const VaeTrainConfig& cfg);

enum class PredictMode { mean, sample };

/// mode == mean uses z = mu (deterministic, the evaluation default);
/// mode == sample draws z through reparameterize.
CsiVector predict_band(const VaeModel& model, const CsiVector& csi_source, PredictMode mode,
                       Rng* rng = nullptr);

/// Checkpoint I/O; round-trips bit-exactly including normalization stats.
void save_vae(const std::string& path, const VaeModel& model);
VaeModel load_vae(const std::string& path);

} // namespace bandloc

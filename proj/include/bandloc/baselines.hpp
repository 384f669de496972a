#pragma once

#include "bandloc/features.hpp"
#include "bandloc/fingerprint_store.hpp"
#include "bandloc/tensor_nn.hpp"

namespace bandloc {

/// Baseline 1: direct MLP regression from source-band to target-band
/// features, capacity-matched to the VAE (64/64 hidden) but with no latent
/// bottleneck. Shares the exact feature pipeline with the VAE.
struct MlpPredictor {
    nn::MlpModel net; // 2*N_sc*i -> 64 -> 64 -> 2*N_sc*i
    BandSpec source_band;
    BandSpec target_band;
    int n_antennas = 1;
    FeatureNorm source_norm;
    FeatureNorm target_norm;

    void validate() const;
};

struct MlpTrainResult {
    MlpPredictor model;
    std::vector<double> epoch_mse; // mean over batch losses, one per epoch
};

/// Same data plumbing as train_vae, MSE loss. Diverging loss raises
/// nn::TrainingDivergedError with the epoch index.
MlpTrainResult train_mlp_predictor(const Database& train_db, int source_band,
                                   int target_band, const nn::TrainConfig& cfg);

CsiVector predict_mlp(const MlpPredictor& model, const CsiVector& csi_source);

void save_mlp_predictor(const std::string& path, const MlpPredictor& model);
MlpPredictor load_mlp_predictor(const std::string& path);

/// Baseline 2: auto-regressive subcarrier extrapolation with a Kalman
/// smoother over the AR state.
struct ArEkfConfig {
    int ar_order = 4;
    double process_noise = 1e-6;
    double observation_noise = 1e-3;
    double init_covariance = 1.0;

    void validate() const;
};

/// The AR fit has no usable rank (zero signal, or fewer subcarriers than the
/// order needs).
struct SingularArSystemError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fits a complex AR(ar_order) model over the source band's subcarrier
/// sequence (per antenna, minimum-norm least squares), smooths the state with
/// a Kalman filter in the AR state-space form, then runs the recursion across
/// the inter-band frequency gap and through the target band. Target bands
/// below the source band in frequency are handled by reversing the sequence.
/// Requires equal subcarrier spacing and non-overlapping bands.
CsiVector ar_ekf_predict(const CsiVector& csi_source, const ArEkfConfig& cfg,
                         const BandSpec& target_band);

/// Baseline 3: the measured CSI itself. Throws std::out_of_range when the
/// record lacks the band.
CsiVector passthrough_band(const FingerprintRecord& record, int band_index);

} // namespace bandloc

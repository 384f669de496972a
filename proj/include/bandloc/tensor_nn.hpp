#pragma once

#include "bandloc/serial.hpp"
#include "bandloc/types.hpp"

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace bandloc::nn {

enum class Activation { identity, relu, leaky_relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;    // out
    Activation activation = Activation::identity;
    double leaky_slope = 0.01;

    int in_dim() const { return static_cast<int>(weights.cols()); }
    int out_dim() const { return static_cast<int>(weights.rows()); }
};

enum class RunMode { train, infer };

/// Small dense network, float64 throughout. Inverted dropout is applied after
/// every hidden activation (never after the output layer) in train mode only.
struct MlpModel {
    std::vector<DenseLayer> layers;
    double dropout_rate = 0.0;
    RunMode mode = RunMode::infer;

    int input_dim() const { return layers.front().in_dim(); }
    int output_dim() const { return layers.back().out_dim(); }
    size_t parameter_count() const;
    void validate() const;
};

/// He-uniform initialized MLP over the given layer widths (dims.size() >= 2).
/// Hidden layers get `hidden_act`, the last layer `output_act`.
MlpModel make_mlp(const std::vector<int>& dims, Activation hidden_act,
                  Activation output_act, double dropout_rate, Rng& rng,
                  double leaky_slope = 0.01);

/// Everything backward() needs: inputs, pre-activations, post-activation
/// (and post-dropout) outputs, and the dropout masks that were drawn.
struct ForwardCache {
    Eigen::MatrixXd input;                       // in x batch
    std::vector<Eigen::MatrixXd> pre_act;        // per layer, out_l x batch
    std::vector<Eigen::MatrixXd> post_act;       // per layer, after dropout
    std::vector<Eigen::MatrixXd> dropout_mask;   // empty matrix where no mask drawn
    size_t layer_count = 0;
};

/// Batched forward pass; columns are samples. In train mode a fresh dropout
/// mask is drawn from `rng` for every hidden layer (rng required when
/// dropout_rate > 0). Pass cache = nullptr for inference-only calls.
Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& input,
                        ForwardCache* cache, Rng* rng);

/// Single-sample convenience wrapper.
Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& input);

struct LayerGrads {
    Eigen::MatrixXd dweights;
    Eigen::VectorXd dbias;
};

struct Gradients {
    std::vector<LayerGrads> layers;
    Eigen::MatrixXd dinput; // in x batch, gradient w.r.t. the forward input
};

/// Exact gradients of the cached forward computation (dropout masks included).
/// output_grad is dLoss/dOutput with the same shape as the forward output.
Gradients backward(const MlpModel& model, const ForwardCache& cache,
                   const Eigen::MatrixXd& output_grad);

struct AdamState {
    std::vector<LayerGrads> first_moment;
    std::vector<LayerGrads> second_moment;
    long step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam(const MlpModel& model, double learning_rate);

/// Standard Adam update with bias correction; increments step_count by one.
/// Throws std::runtime_error on non-finite gradients.
void adam_step(MlpModel& model, const Gradients& grads, AdamState& state);

/// Shared training hyperparameters (Adam).
struct TrainConfig {
    double learning_rate = 1e-5;
    int epochs = 50;
    double beta = 0.1;   // KL weight; ignored by plain-MSE trainers
    int batch_size = 128;
    std::uint64_t seed = 1;
};

/// Raised when a training loop produces a non-finite loss.
struct TrainingDivergedError : std::runtime_error {
    int epoch;
    explicit TrainingDivergedError(int epoch_index)
        : std::runtime_error("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch_index)),
          epoch(epoch_index) {}
};

/// Low-level checkpoint pieces: layer descriptors go into `meta`, packed
/// float64 parameters into the payload. Composite checkpoints (e.g. a VAE's
/// encoder + decoder) embed several models in one envelope this way.
void write_mlp(PayloadWriter& w, nlohmann::json& meta, const MlpModel& model);
MlpModel read_mlp(PayloadReader& r, const nlohmann::json& meta);

/// Checkpoint I/O. Round-trips are bit-exact (packed float64 parameters).
/// `extra_meta` is stored verbatim in the file header and returned on load.
void save_mlp(const std::string& path, const MlpModel& model,
              const std::string& extra_meta_json = "{}");
MlpModel load_mlp(const std::string& path, std::string* extra_meta_json = nullptr);

} // namespace bandloc::nn

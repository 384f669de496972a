#pragma once

#include "bandloc/features.hpp"
#include "bandloc/fingerprint_store.hpp"
#include "bandloc/metrics.hpp"
#include "bandloc/tensor_nn.hpp"

#include <functional>

namespace bandloc {

/// Where one band's block of the spliced feature vector comes from.
/// `measured` and `passthrough` both read the record's stored CSI (the latter
/// names the all-measured-bands baseline); `predicted` applies a registered
/// cross-band model to the record.
struct BandSourceSpec {
    enum class Kind { measured, predicted, passthrough };
    Kind kind = Kind::measured;
    std::string model_id; // registry key, only for predicted
};

struct SpliceSpec {
    std::vector<int> band_order;
    std::map<int, BandSourceSpec> per_band_source;

    /// Every listed band must exist in `bands`, appear at most once, and have
    /// a source entry. Subsets are legal: a single-band spec is the
    /// no-splicing baseline.
    void validate(const std::vector<BandSpec>& bands) const;
};

/// Named cross-band predictors the splicer can draw from. Each callback maps
/// a full record to one predicted CsiVector.
class PredictorRegistry {
public:
    using PredictFn = std::function<CsiVector(const FingerprintRecord&)>;

    void add(const std::string& id, PredictFn fn);
    const PredictFn& get(const std::string& id) const;
    bool has(const std::string& id) const;
    std::size_t size() const { return fns_.size(); }

private:
    std::map<std::string, PredictFn> fns_;
};

/// Raw spliced feature vector: per-band [Re; Im] blocks concatenated in
/// band_order. Normalization is applied later with the localizer's stored
/// stats so the pipeline is identical across predictor sources.
Eigen::VectorXd splice_features(const FingerprintRecord& record, const SpliceSpec& spec,
                                const PredictorRegistry& registry,
                                const std::vector<BandSpec>& bands);

struct LocalizerModel {
    nn::MlpModel mlp; // spliced dim -> 256 -> 128 -> 64 -> 2
    FeatureNorm feature_norm;
    Rect area;
    SpliceSpec splice;
    std::vector<BandSpec> bands;
    int n_antennas = 1;

    void validate() const;
};

/// Table defaults: lr 1e-6, 90 epochs, Adam; widths and dropout are ours.
struct LocTrainConfig : nn::TrainConfig {
    std::vector<int> hidden = {256, 128, 64};
    double dropout_rate = 0.1;

    LocTrainConfig() {
        learning_rate = 1e-6;
        epochs = 90;
    }
};

struct LocTrainResult {
    LocalizerModel model;
    std::vector<double> epoch_mse; // on normalized coordinates
};

/// Regresses [0,1]^2-normalized coordinates from spliced features with MSE
/// loss; dropout active during training. Divergence raises
/// nn::TrainingDivergedError.
LocTrainResult train_localizer(const Database& train_db, const SpliceSpec& spec,
                               const PredictorRegistry& registry, const Rect& area,
                               const LocTrainConfig& cfg);

/// De-normalizes the MLP output and projects it onto the feasible area.
Location localize(const LocalizerModel& model, const Eigen::VectorXd& raw_features);

Location localize_record(const LocalizerModel& model, const FingerprintRecord& record,
                         const PredictorRegistry& registry);

/// Per-sample squared errors plus aggregates over all records of test_db.
MetricsReport evaluate_localization(const LocalizerModel& model, const Database& test_db,
                                    const PredictorRegistry& registry);

void save_localizer(const std::string& path, const LocalizerModel& model);
LocalizerModel load_localizer(const std::string& path);

} // namespace bandloc

#pragma once

#include "bandloc/baselines.hpp"
#include "bandloc/channel_sim.hpp"
#include "bandloc/localizer.hpp"
#include "bandloc/vae_predictor.hpp"

#include <iosfwd>
#include <map>

namespace bandloc {

/// Everything one end-to-end run needs. Field defaults come from
/// make_default_config(profile); every field maps 1:1 onto a config-file key
/// (see config_schema()).
struct ExperimentConfig {
    std::string profile = "desk"; // desk | paper (sample-count defaults)
    std::string out_dir = "runs/latest";
    std::uint64_t seed = 1;

    ScenarioConfig scenario;
    PathModelConfig path_model;

    // Band ladder; band 1 starts at band_start_hz, consecutive centers are
    // band_step_hz apart.
    double band_start_hz = 5.765e9;
    double band_step_hz = 20e6;
    double band_width_hz = 20e6;
    int n_subcarriers = 64;
    int n_bands = 3;
    int source_band = 2; // the measured band; others are predicted

    std::vector<double> snr_list_db = {10.0, 20.0, 30.0};
    double loc_snr_db = 30.0;
    int samples_per_rp = 2000;
    int samples_per_tp = 400;

    std::vector<std::string> schemes = {"vae", "mlp", "ar_ekf", "passthrough"};
    bool run_ccne = true;
    bool run_loc = true;

    VaeTrainConfig vae;
    nn::TrainConfig mlp;
    ArEkfConfig ar;
    LocTrainConfig loc;

    std::vector<BandSpec> bands() const;
    void validate() const;
};

/// Profile defaults: "desk" = 2000 samples/RP and 400/TP with desk-calibrated
/// localizer steps; "paper" = 10000/RP, 2000/TP and table-default training
/// lengths throughout.
ExperimentConfig make_default_config(const std::string& profile);

/// key=value lines, '#' comments, blank lines ignored. Later keys win.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Applies typed overrides onto cfg. Unknown keys or unparsable values throw
/// std::invalid_argument. "profile" must come first if present (it resets the
/// defaults).
void apply_overrides(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv);

/// Canonical config text (fixed key order, round-trip exact floats). Feeding it
/// back through apply_overrides reproduces the same config; its hash is the
/// run fingerprint embedded in every output.
std::string resolve_config(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// One line per key: "name<TAB>default<TAB>description", for --help output.
std::string config_schema();

/// Raised by run_experiment with the failing stage's name in what().
struct StageError : std::runtime_error {
    std::string stage;
    StageError(const std::string& stage_name, const std::string& message)
        : std::runtime_error("stage '" + stage_name + "' failed: " + message),
          stage(stage_name) {}
};

/// Runs database build -> predictor training -> CCNE table -> localizer
/// training -> localization table -> per-subcarrier overlay dump, writing
/// tables/*.csv, models/*.ckpt, config.resolved and log.txt under
/// cfg.out_dir. Returns the run directory. On failure writes a FAILED marker
/// (stage + reason) and rethrows StageError.
std::string run_experiment(const ExperimentConfig& cfg, std::ostream* echo = nullptr);

} // namespace bandloc

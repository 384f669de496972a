#pragma once

#include "bandloc/channel_sim.hpp"
#include "bandloc/features.hpp"
#include "bandloc/types.hpp"

#include <nlohmann/json.hpp>

namespace bandloc {

enum class PointRole : std::uint8_t { reference = 0, test = 1 };

/// One (location, multi-band CSI) tuple. vectors are phase-sanitized at
/// build/ingest time so every consumer sees consistent responses.
struct FingerprintRecord {
    Location location;
    std::map<int, CsiVector> csi; // band_index -> sanitized CSI
    std::int64_t sample_id = 0;
    PointRole role = PointRole::reference;
    int point_index = 0;
};

struct Database {
    std::vector<BandSpec> bands;
    std::vector<FingerprintRecord> records;
    nlohmann::json metadata; // seed, snr_db, scenario summary, creation params

    int n_antennas() const;
    const BandSpec& band(int band_index) const;
    void validate() const;
};

struct BuildParams {
    int samples_per_rp = 1;
    int samples_per_tp = 0;
    double snr_db = 30.0;
    bool corrupt_phase = true; // sanitization removes the ramp again
    PathModelConfig path_model{};
};

/// Builds a simulated database over the scenario's RPs and TPs. Each point
/// gets one PathSet and `samples_per_*` independent noisy observations per
/// band, each phase-sanitized. Deterministic for a fixed seed: every
/// (point, sample) pair owns a forked rng stream.
Database build_database(const Scenario& scenario, const std::vector<BandSpec>& bands,
                        const BuildParams& params, std::uint64_t seed);

/// Binary persistence; load(save(db)) is bit-identical (exact float64 pairs).
/// Distinct errors: VersionMismatchError (bad magic/version), TruncationError,
/// ChecksumError.
void save_database(const Database& db, const std::string& path);
Database load_database(const std::string& path);

/// Ingests a prototype CSV export with header
///   sample_id,x,y,band_index,antenna,subcarrier,re,im
/// Groups rows into records, applies sanitize_phase per (record, band,
/// antenna), and rejects records that do not cover every declared band with
/// all subcarriers/antennas (count lands in metadata["rejected_records"]).
/// Throws on schema mismatch or non-finite values.
Database ingest_prototype_csv(const std::string& path, const std::vector<BandSpec>& bands);

struct SplitPolicy {
    enum class Kind { by_point_role, random_fraction };
    Kind kind = Kind::by_point_role;
    double fraction = 0.5; // train share, only for random_fraction; must be in (0,1)
    std::uint64_t seed = 1;
};

/// Splits into disjoint, exhaustive (train, test) databases.
std::pair<Database, Database> split_train_test(const Database& db, const SplitPolicy& policy);

/// One column per record: csi_to_features of that record's CSI on `band_index`.
/// Every model that consumes per-band features (cross-band predictors and the
/// localizer alike) goes through this single function.
Eigen::MatrixXd band_feature_matrix(const Database& db, int band_index);

/// Ground-truth locations as a 2 x N matrix (x row, y row), record order.
Eigen::MatrixXd location_matrix(const Database& db);

void to_json(nlohmann::json& j, const BandSpec& b);
void from_json(const nlohmann::json& j, BandSpec& b);

} // namespace bandloc

#include "bandloc/fingerprint_store.hpp"

#include "bandloc/serial.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bandloc {

namespace {

const std::string kDbMagic = "BLOCDB01";
constexpr std::uint32_t kDbVersion = 1;

} // namespace

int Database::n_antennas() const {
    if (records.empty() || records.front().csi.empty()) return 0;
    return records.front().csi.begin()->second.n_antennas;
}

const BandSpec& Database::band(int band_index) const {
    for (const auto& b : bands)
        if (b.band_index == band_index) return b;
    throw std::out_of_range("database has no band with index " + std::to_string(band_index));
}

void Database::validate() const {
    for (const auto& b : bands) b.validate();
    for (const auto& rec : records) {
        if (rec.csi.size() != bands.size())
            throw std::runtime_error("record " + std::to_string(rec.sample_id) +
                                     " does not cover all bands");
        for (const auto& b : bands) {
            auto it = rec.csi.find(b.band_index);
            if (it == rec.csi.end())
                throw std::runtime_error("record " + std::to_string(rec.sample_id) +
                                         " missing band " + std::to_string(b.band_index));
            const CsiVector& v = it->second;
            if (static_cast<int>(v.values.size()) != b.n_subcarriers * v.n_antennas)
                throw std::runtime_error("record " + std::to_string(rec.sample_id) +
                                         " has wrong CSI length in band " +
                                         std::to_string(b.band_index));
        }
    }
}

Database build_database(const Scenario& scenario, const std::vector<BandSpec>& bands,
                        const BuildParams& params, std::uint64_t seed) {
    if (bands.empty()) throw std::invalid_argument("build_database: no bands given");
    for (const auto& b : bands) b.validate();
    if (params.samples_per_rp < 0 || params.samples_per_tp < 0)
        throw std::invalid_argument("build_database: negative sample count");

    Database db;
    db.bands = bands;
    Rng root(seed);

    std::int64_t next_id = 0;
    auto emit_point = [&](const Location& loc, PointRole role, int point_index, int n_samples) {
        Rng point_rng = root.fork(role == PointRole::reference ? "db.rp" : "db.tp")
                            .fork(static_cast<std::uint64_t>(point_index));
        Rng paths_rng = point_rng.fork("paths");
        PathSet paths = gen_paths(scenario, loc, bands, params.path_model, paths_rng);
        for (int s = 0; s < n_samples; ++s) {
            Rng sample_rng = point_rng.fork("sample").fork(static_cast<std::uint64_t>(s));
            FingerprintRecord rec;
            rec.location = loc;
            rec.sample_id = next_id++;
            rec.role = role;
            rec.point_index = point_index;
            for (const auto& band : bands) {
                CsiVector clean = channel_response(paths, band);
                Rng band_rng = sample_rng.fork(static_cast<std::uint64_t>(band.band_index));
                CsiVector noisy =
                    observe_csi(clean, params.snr_db, params.corrupt_phase, band_rng);
                rec.csi.emplace(band.band_index, sanitize_phase(noisy));
            }
            db.records.push_back(std::move(rec));
        }
    };

    for (int i = 0; i < static_cast<int>(scenario.reference_points.size()); ++i)
        emit_point(scenario.reference_points[i], PointRole::reference, i, params.samples_per_rp);
    for (int i = 0; i < static_cast<int>(scenario.test_points.size()); ++i)
        emit_point(scenario.test_points[i], PointRole::test, i, params.samples_per_tp);

    db.metadata = {
        {"seed", seed},
        {"snr_db", params.snr_db},
        {"corrupt_phase", params.corrupt_phase},
        {"samples_per_rp", params.samples_per_rp},
        {"samples_per_tp", params.samples_per_tp},
        {"n_reference_points", scenario.reference_points.size()},
        {"n_test_points", scenario.test_points.size()},
        {"area", {scenario.area.x_min, scenario.area.x_max, scenario.area.y_min,
                  scenario.area.y_max}},
        {"ap", {scenario.ap_location.x, scenario.ap_location.y}},
    };
    db.validate();
    return db;
}

void save_database(const Database& db, const std::string& path) {
    Envelope env;
    env.magic = kDbMagic;
    env.version = kDbVersion;
    env.meta = db.metadata.dump();

    PayloadWriter w(env.payload);
    w.put_u32(static_cast<std::uint32_t>(db.bands.size()));
    for (const auto& b : db.bands) {
        w.put_i64(b.band_index);
        w.put_f64(b.center_freq_hz);
        w.put_f64(b.bandwidth_hz);
        w.put_i64(b.n_subcarriers);
    }
    w.put_u64(db.records.size());
    for (const auto& rec : db.records) {
        w.put_i64(rec.sample_id);
        w.put_f64(rec.location.x);
        w.put_f64(rec.location.y);
        w.put_u8(static_cast<std::uint8_t>(rec.role));
        w.put_i64(rec.point_index);
        w.put_u32(static_cast<std::uint32_t>(rec.csi.size()));
        for (const auto& [band_index, csi] : rec.csi) {
            w.put_i64(band_index);
            w.put_i64(csi.n_antennas);
            w.put_u64(csi.values.size());
            for (const cd& v : csi.values) {
                w.put_f64(v.real());
                w.put_f64(v.imag());
            }
        }
    }
    write_envelope(path, env);
}

Database load_database(const std::string& path) {
    Envelope env = read_envelope(path, kDbMagic, kDbVersion);
    Database db;
    db.metadata = env.meta.empty() ? nlohmann::json::object() : nlohmann::json::parse(env.meta);

    PayloadReader r(env.payload);
    const std::uint32_t n_bands = r.get_u32();
    db.bands.resize(n_bands);
    for (auto& b : db.bands) {
        b.band_index = static_cast<int>(r.get_i64());
        b.center_freq_hz = r.get_f64();
        b.bandwidth_hz = r.get_f64();
        b.n_subcarriers = static_cast<int>(r.get_i64());
    }
    const std::uint64_t n_records = r.get_u64();
    db.records.resize(n_records);
    for (auto& rec : db.records) {
        rec.sample_id = r.get_i64();
        rec.location.x = r.get_f64();
        rec.location.y = r.get_f64();
        rec.role = static_cast<PointRole>(r.get_u8());
        rec.point_index = static_cast<int>(r.get_i64());
        const std::uint32_t n_csi = r.get_u32();
        for (std::uint32_t i = 0; i < n_csi; ++i) {
            const int band_index = static_cast<int>(r.get_i64());
            CsiVector csi;
            csi.band = db.band(band_index);
            csi.n_antennas = static_cast<int>(r.get_i64());
            csi.values.resize(r.get_u64());
            for (auto& v : csi.values) {
                const double re = r.get_f64();
                const double im = r.get_f64();
                v = cd(re, im);
            }
            rec.csi.emplace(band_index, std::move(csi));
        }
    }
    if (!r.at_end()) throw TruncationError("database payload has trailing bytes: " + path);
    db.validate();
    return db;
}

namespace {

struct CsvRow {
    std::int64_t sample_id;
    double x, y;
    int band_index, antenna, subcarrier;
    double re, im;
};

double parse_double_field(const std::string& field, int line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument("trailing chars");
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite value at line " + std::to_string(line_no));
        return v;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        throw std::runtime_error("malformed numeric field '" + field + "' at line " +
                                 std::to_string(line_no));
    }
}

std::int64_t parse_int_field(const std::string& field, int line_no) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::runtime_error("malformed integer field '" + field + "' at line " +
                                 std::to_string(line_no));
    return v;
}

} // namespace

Database ingest_prototype_csv(const std::string& path, const std::vector<BandSpec>& bands) {
    if (bands.empty()) throw std::invalid_argument("ingest_prototype_csv: no bands given");
    for (const auto& b : bands) b.validate();

    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string expected_header = "sample_id,x,y,band_index,antenna,subcarrier,re,im";
    if (line != expected_header)
        throw std::runtime_error("csv schema mismatch: expected header '" + expected_header +
                                 "', got '" + line + "'");

    std::vector<CsvRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.push_back("");
        if (fields.size() != 8)
            throw std::runtime_error("csv schema mismatch: expected 8 fields, got " +
                                     std::to_string(fields.size()) + " at line " +
                                     std::to_string(line_no));
        CsvRow row;
        row.sample_id = parse_int_field(fields[0], line_no);
        row.x = parse_double_field(fields[1], line_no);
        row.y = parse_double_field(fields[2], line_no);
        row.band_index = static_cast<int>(parse_int_field(fields[3], line_no));
        row.antenna = static_cast<int>(parse_int_field(fields[4], line_no));
        row.subcarrier = static_cast<int>(parse_int_field(fields[5], line_no));
        row.re = parse_double_field(fields[6], line_no);
        row.im = parse_double_field(fields[7], line_no);
        rows.push_back(row);
    }

    // Group rows by sample_id while preserving first-seen order.
    std::vector<std::int64_t> order;
    std::map<std::int64_t, std::vector<CsvRow>> groups;
    for (const auto& row : rows) {
        auto [it, inserted] = groups.try_emplace(row.sample_id);
        if (inserted) order.push_back(row.sample_id);
        it->second.push_back(row);
    }

    // Infer antenna count from the densest sample so partially-covered
    // records can be detected and rejected rather than silently truncated.
    int n_antennas = 1;
    for (const auto& [id, g] : groups) {
        int max_ant = 0;
        for (const auto& row : g) max_ant = std::max(max_ant, row.antenna);
        n_antennas = std::max(n_antennas, max_ant + 1);
    }

    Database db;
    db.bands = bands;
    int rejected = 0;
    for (std::int64_t id : order) {
        const auto& g = groups.at(id);
        FingerprintRecord rec;
        rec.sample_id = id;
        rec.location = {g.front().x, g.front().y};
        bool ok = true;
        for (const auto& row : g) {
            if (row.x != rec.location.x || row.y != rec.location.y) {
                ok = false; // inconsistent location inside one sample
                break;
            }
        }
        if (ok) {
            for (const auto& band : bands) {
                CsiVector csi;
                csi.band = band;
                csi.n_antennas = n_antennas;
                csi.values.assign(static_cast<std::size_t>(band.n_subcarriers) * n_antennas,
                                  cd(0.0, 0.0));
                std::vector<char> seen(csi.values.size(), 0);
                for (const auto& row : g) {
                    if (row.band_index != band.band_index) continue;
                    if (row.antenna < 0 || row.antenna >= n_antennas || row.subcarrier < 0 ||
                        row.subcarrier >= band.n_subcarriers) {
                        ok = false;
                        break;
                    }
                    const std::size_t idx =
                        static_cast<std::size_t>(row.antenna) * band.n_subcarriers +
                        row.subcarrier;
                    csi.values[idx] = cd(row.re, row.im);
                    seen[idx] = 1;
                }
                if (!ok || std::find(seen.begin(), seen.end(), 0) != seen.end()) {
                    ok = false;
                    break;
                }
                rec.csi.emplace(band.band_index, sanitize_phase(csi));
            }
        }
        if (ok) {
            rec.role = PointRole::reference;
            rec.point_index = static_cast<int>(db.records.size());
            db.records.push_back(std::move(rec));
        } else {
            ++rejected;
        }
    }

    db.metadata = {
        {"source", "csv"},
        {"path", path},
        {"rejected_records", rejected},
        {"n_antennas", n_antennas},
    };
    db.validate();
    return db;
}

std::pair<Database, Database> split_train_test(const Database& db, const SplitPolicy& policy) {
    Database train, test;
    train.bands = test.bands = db.bands;
    train.metadata = test.metadata = db.metadata;

    if (policy.kind == SplitPolicy::Kind::by_point_role) {
        for (const auto& rec : db.records)
            (rec.role == PointRole::reference ? train : test).records.push_back(rec);
        train.metadata["split"] = "by_point_role/train";
        test.metadata["split"] = "by_point_role/test";
    } else {
        if (!(policy.fraction > 0.0 && policy.fraction < 1.0))
            throw std::invalid_argument("random_fraction split needs fraction in (0,1)");
        std::vector<int> idx(db.records.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(policy.seed);
        rng.shuffle(idx);
        std::size_t n_train = static_cast<std::size_t>(
            std::llround(policy.fraction * static_cast<double>(idx.size())));
        n_train = std::min(n_train, idx.size());
        std::vector<char> in_train(db.records.size(), 0);
        for (std::size_t i = 0; i < n_train; ++i) in_train[static_cast<std::size_t>(idx[i])] = 1;
        for (std::size_t i = 0; i < db.records.size(); ++i)
            (in_train[i] ? train : test).records.push_back(db.records[i]);
        train.metadata["split"] = "random_fraction/train";
        test.metadata["split"] = "random_fraction/test";
        train.metadata["split_fraction"] = policy.fraction;
        test.metadata["split_fraction"] = policy.fraction;
        train.metadata["split_seed"] = policy.seed;
        test.metadata["split_seed"] = policy.seed;
    }
    return {std::move(train), std::move(test)};
}

Eigen::MatrixXd band_feature_matrix(const Database& db, int band_index) {
    if (db.records.empty()) throw std::invalid_argument("band_feature_matrix: empty database");
    const BandSpec& band = db.band(band_index);
    const int n_feat = 2 * band.n_subcarriers * db.n_antennas();
    Eigen::MatrixXd out(n_feat, static_cast<Eigen::Index>(db.records.size()));
    for (std::size_t i = 0; i < db.records.size(); ++i) {
        auto it = db.records[i].csi.find(band_index);
        if (it == db.records[i].csi.end())
            throw std::out_of_range("record lacks band " + std::to_string(band_index));
        out.col(static_cast<Eigen::Index>(i)) = csi_to_features(it->second);
    }
    return out;
}

Eigen::MatrixXd location_matrix(const Database& db) {
    Eigen::MatrixXd out(2, static_cast<Eigen::Index>(db.records.size()));
    for (std::size_t i = 0; i < db.records.size(); ++i) {
        out(0, static_cast<Eigen::Index>(i)) = db.records[i].location.x;
        out(1, static_cast<Eigen::Index>(i)) = db.records[i].location.y;
    }
    return out;
}

void to_json(nlohmann::json& j, const BandSpec& b) {
    j = nlohmann::json{{"band_index", b.band_index},
                       {"center_freq_hz", b.center_freq_hz},
                       {"bandwidth_hz", b.bandwidth_hz},
                       {"n_subcarriers", b.n_subcarriers}};
}

void from_json(const nlohmann::json& j, BandSpec& b) {
    j.at("band_index").get_to(b.band_index);
    j.at("center_freq_hz").get_to(b.center_freq_hz);
    j.at("bandwidth_hz").get_to(b.bandwidth_hz);
    j.at("n_subcarriers").get_to(b.n_subcarriers);
}

} // namespace bandloc

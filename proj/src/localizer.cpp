#include "bandloc/localizer.hpp"

#include "bandloc/baselines.hpp"
#include "bandloc/serial.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace bandloc {

using json = nlohmann::json;

void SpliceSpec::validate(const std::vector<BandSpec>& bands) const {
    if (band_order.empty()) throw std::invalid_argument("SpliceSpec: empty band_order");
    std::set<int> declared;
    for (const auto& b : bands) declared.insert(b.band_index);
    std::set<int> seen;
    for (int idx : band_order) {
        if (!declared.count(idx))
            throw std::invalid_argument("SpliceSpec: unknown band " + std::to_string(idx));
        if (!seen.insert(idx).second)
            throw std::invalid_argument("SpliceSpec: band " + std::to_string(idx) +
                                        " listed twice");
        if (!per_band_source.count(idx))
            throw std::invalid_argument("SpliceSpec: band " + std::to_string(idx) +
                                        " has no source");
    }
}

void PredictorRegistry::add(const std::string& id, PredictFn fn) {
    if (!fn) throw std::invalid_argument("PredictorRegistry: null predictor for " + id);
    fns_[id] = std::move(fn);
}

const PredictorRegistry::PredictFn& PredictorRegistry::get(const std::string& id) const {
    auto it = fns_.find(id);
    if (it == fns_.end())
        throw std::out_of_range("PredictorRegistry: no predictor named " + id);
    return it->second;
}

bool PredictorRegistry::has(const std::string& id) const { return fns_.count(id) != 0; }

Eigen::VectorXd splice_features(const FingerprintRecord& record, const SpliceSpec& spec,
                                const PredictorRegistry& registry,
                                const std::vector<BandSpec>& bands) {
    spec.validate(bands);
    std::vector<Eigen::VectorXd> blocks;
    blocks.reserve(spec.band_order.size());
    Eigen::Index total = 0;
    for (int band_index : spec.band_order) {
        const BandSourceSpec& src = spec.per_band_source.at(band_index);
        CsiVector csi;
        switch (src.kind) {
        case BandSourceSpec::Kind::measured:
        case BandSourceSpec::Kind::passthrough:
            csi = passthrough_band(record, band_index);
            break;
        case BandSourceSpec::Kind::predicted:
            csi = registry.get(src.model_id)(record);
            if (csi.band.band_index != band_index)
                throw std::runtime_error("predictor " + src.model_id +
                                         " produced the wrong band");
            break;
        }
        blocks.push_back(csi_to_features(csi));
        total += blocks.back().size();
    }
    Eigen::VectorXd out(total);
    Eigen::Index at = 0;
    for (const auto& block : blocks) {
        out.segment(at, block.size()) = block;
        at += block.size();
    }
    return out;
}

void LocalizerModel::validate() const {
    mlp.validate();
    if (mlp.output_dim() != 2)
        throw std::invalid_argument("LocalizerModel: output dim must be 2");
    if (area.width() <= 0.0 || area.height() <= 0.0)
        throw std::invalid_argument("LocalizerModel: degenerate area");
    if (feature_norm.mean.size() != mlp.input_dim())
        throw std::invalid_argument("LocalizerModel: norm stats do not match input dim");
}

namespace {

Eigen::Vector2d normalize_target(const Location& loc, const Rect& area) {
    return {(loc.x - area.x_min) / area.width(), (loc.y - area.y_min) / area.height()};
}

Location denormalize_target(const Eigen::Vector2d& t, const Rect& area) {
    return {area.x_min + t[0] * area.width(), area.y_min + t[1] * area.height()};
}

} // namespace

LocTrainResult train_localizer(const Database& train_db, const SpliceSpec& spec,
                               const PredictorRegistry& registry, const Rect& area,
                               const LocTrainConfig& cfg) {
    if (train_db.records.empty())
        throw std::invalid_argument("train_localizer: empty database");
    if (cfg.epochs < 0) throw std::invalid_argument("train_localizer: negative epochs");
    if (cfg.batch_size <= 0)
        throw std::invalid_argument("train_localizer: batch_size must be > 0");
    if (area.width() <= 0.0 || area.height() <= 0.0)
        throw std::invalid_argument("train_localizer: degenerate area");
    spec.validate(train_db.bands);

    const Eigen::Index n = static_cast<Eigen::Index>(train_db.records.size());
    Eigen::MatrixXd x_raw;
    Eigen::MatrixXd targets(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const FingerprintRecord& rec = train_db.records[static_cast<size_t>(i)];
        const Eigen::VectorXd f = splice_features(rec, spec, registry, train_db.bands);
        if (x_raw.size() == 0) x_raw.resize(f.size(), n);
        x_raw.col(i) = f;
        targets.col(i) = normalize_target(rec.location, area);
    }

    LocTrainResult result;
    result.model.area = area;
    result.model.splice = spec;
    result.model.bands = train_db.bands;
    result.model.n_antennas = train_db.n_antennas();
    result.model.feature_norm = compute_feature_norm(x_raw);

    Rng root(cfg.seed);
    Rng init_rng = root.fork("loc.init");
    std::vector<int> dims;
    dims.push_back(static_cast<int>(x_raw.rows()));
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(2);
    result.model.mlp = nn::make_mlp(dims, nn::Activation::relu, nn::Activation::identity,
                                    cfg.dropout_rate, init_rng);

    const Eigen::MatrixXd x = result.model.feature_norm.apply(x_raw);
    nn::AdamState adam = nn::make_adam(result.model.mlp, cfg.learning_rate);
    Rng shuffle_rng = root.fork("loc.shuffle");
    Rng dropout_rng = root.fork("loc.dropout");
    result.model.mlp.mode = nn::RunMode::train;

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_mse = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(x.rows(), b), yb(2, b);
            for (Eigen::Index i = 0; i < b; ++i) {
                xb.col(i) = x.col(order[static_cast<size_t>(start + i)]);
                yb.col(i) = targets.col(order[static_cast<size_t>(start + i)]);
            }
            nn::ForwardCache cache;
            const Eigen::MatrixXd pred =
                nn::forward(result.model.mlp, xb, &cache, &dropout_rng);
            const double mse = (pred - yb).squaredNorm() / static_cast<double>(b);
            if (!std::isfinite(mse)) throw nn::TrainingDivergedError(epoch);
            const Eigen::MatrixXd dpred = 2.0 / static_cast<double>(b) * (pred - yb);
            nn::Gradients grads = nn::backward(result.model.mlp, cache, dpred);
            nn::adam_step(result.model.mlp, grads, adam);
            epoch_mse += mse * static_cast<double>(b) / static_cast<double>(n);
        }
        result.epoch_mse.push_back(epoch_mse);
    }

    result.model.mlp.mode = nn::RunMode::infer;
    return result;
}

Location localize(const LocalizerModel& model, const Eigen::VectorXd& raw_features) {
    if (raw_features.size() != model.mlp.input_dim())
        throw std::invalid_argument("localize: feature length mismatch");
    const Eigen::VectorXd y =
        nn::forward(model.mlp, model.feature_norm.apply(raw_features));
    return model.area.clamp(denormalize_target(Eigen::Vector2d(y[0], y[1]), model.area));
}

Location localize_record(const LocalizerModel& model, const FingerprintRecord& record,
                         const PredictorRegistry& registry) {
    return localize(model, splice_features(record, model.splice, registry, model.bands));
}

MetricsReport evaluate_localization(const LocalizerModel& model, const Database& test_db,
                                    const PredictorRegistry& registry) {
    MetricsReport report;
    report.loc_sq_err_m2.reserve(test_db.records.size());
    for (const FingerprintRecord& rec : test_db.records) {
        const Location est = localize_record(model, rec, registry);
        const double dx = est.x - rec.location.x;
        const double dy = est.y - rec.location.y;
        report.loc_sq_err_m2.push_back(dx * dx + dy * dy);
    }
    report.finalize();
    return report;
}

namespace {
constexpr char kLocMagic[] = "BLOCLOC\x01";
constexpr std::uint32_t kLocVersion = 1;
} // namespace

void save_localizer(const std::string& path, const LocalizerModel& model) {
    model.validate();
    Envelope env;
    env.magic = kLocMagic;
    env.version = kLocVersion;

    json meta;
    meta["kind"] = "localizer";
    meta["area"] = {model.area.x_min, model.area.x_max, model.area.y_min, model.area.y_max};
    meta["n_antennas"] = model.n_antennas;
    meta["bands"] = model.bands;
    json splice;
    splice["band_order"] = model.splice.band_order;
    json sources = json::object();
    for (const auto& [band, src] : model.splice.per_band_source) {
        const char* kind = src.kind == BandSourceSpec::Kind::measured ? "measured"
                           : src.kind == BandSourceSpec::Kind::predicted ? "predicted"
                                                                         : "passthrough";
        sources[std::to_string(band)] = {{"kind", kind}, {"model_id", src.model_id}};
    }
    splice["per_band_source"] = sources;
    meta["splice"] = splice;
    meta["mlp"] = json::object();

    PayloadWriter w(env.payload);
    nn::write_mlp(w, meta["mlp"], model.mlp);
    w.put_u64(static_cast<std::uint64_t>(model.feature_norm.mean.size()));
    w.put_f64_array(model.feature_norm.mean.data(),
                    static_cast<size_t>(model.feature_norm.mean.size()));
    w.put_f64_array(model.feature_norm.stddev.data(),
                    static_cast<size_t>(model.feature_norm.stddev.size()));
    env.meta = meta.dump();
    write_envelope(path, env);
}

LocalizerModel load_localizer(const std::string& path) {
    Envelope env = read_envelope(path, kLocMagic, kLocVersion);
    json meta = json::parse(env.meta);

    LocalizerModel model;
    const auto& area = meta.at("area");
    model.area = Rect{area.at(0).get<double>(), area.at(1).get<double>(),
                      area.at(2).get<double>(), area.at(3).get<double>()};
    model.n_antennas = meta.at("n_antennas").get<int>();
    model.bands = meta.at("bands").get<std::vector<BandSpec>>();
    const auto& splice = meta.at("splice");
    model.splice.band_order = splice.at("band_order").get<std::vector<int>>();
    for (const auto& [key, val] : splice.at("per_band_source").items()) {
        BandSourceSpec src;
        const std::string kind = val.at("kind").get<std::string>();
        src.kind = kind == "measured"    ? BandSourceSpec::Kind::measured
                   : kind == "predicted" ? BandSourceSpec::Kind::predicted
                                         : BandSourceSpec::Kind::passthrough;
        src.model_id = val.at("model_id").get<std::string>();
        model.splice.per_band_source[std::stoi(key)] = src;
    }

    PayloadReader r(env.payload);
    model.mlp = nn::read_mlp(r, meta.at("mlp"));
    const auto n = static_cast<Eigen::Index>(r.get_u64());
    model.feature_norm.mean.resize(n);
    r.get_f64_array(model.feature_norm.mean.data(), static_cast<size_t>(n));
    model.feature_norm.stddev.resize(n);
    r.get_f64_array(model.feature_norm.stddev.data(), static_cast<size_t>(n));
    model.validate();
    return model;
}

} // namespace bandloc

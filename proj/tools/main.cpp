// bandloc: build fingerprint databases, train cross-band predictors and
// localizers, and run the end-to-end experiment pipeline from one binary.

#include "bandloc/experiment.hpp"

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

using namespace bandloc;
using json = nlohmann::json;

namespace {

// distinct exit code per error class so scripts can branch on failures
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 2,       // bad flags, bad config keys/values, bad arguments
    exit_io = 3,          // missing/unreadable/unwritable files
    exit_version = 4,     // wrong file kind or unsupported format version
    exit_truncated = 5,   // file ends early
    exit_checksum = 6,    // payload corrupted
    exit_singular_ar = 7, // AR fit has no usable rank
    exit_diverged = 8,    // training produced a non-finite loss
    exit_stage = 9,       // experiment stage failure (FAILED marker written)
};

struct GlobalOpts {
    std::string config_path;
    std::vector<std::string> sets;
};

// defaults -> config file -> --set flags, merged into one batch so a profile
// switch anywhere resets the defaults before the other keys land
ExperimentConfig load_config(const GlobalOpts& g) {
    std::map<std::string, std::string> kv;
    if (!g.config_path.empty()) kv = read_config_file(g.config_path);
    for (const std::string& item : g.sets) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("--set expects key=value, got '" + item + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    ExperimentConfig cfg = make_default_config("desk");
    apply_overrides(cfg, kv);
    return cfg;
}

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    return out;
}

Database load_db_checked(const std::string& path) {
    Database db = load_database(path);
    db.validate();
    return db;
}

// ---- shared eval export (CSV per sample + JSON aggregate) -----------------

struct EvalRow {
    std::int64_t sample_id;
    Location loc;
    double ccne_db_value;
};

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream out = open_out(path);
    out << "# format_version=1\n";
    out << "sample_id,x,y,ccne_db\n";
    for (const EvalRow& r : rows)
        out << r.sample_id << ',' << fmt_g(r.loc.x) << ',' << fmt_g(r.loc.y) << ','
            << fmt_g(ccne_floored(r.ccne_db_value)) << '\n';
}

void write_eval_json(const std::string& path, const std::string& scheme, int source_band,
                     int target_band, const std::vector<EvalRow>& rows) {
    std::vector<double> per_sample;
    per_sample.reserve(rows.size());
    for (const EvalRow& r : rows) per_sample.push_back(r.ccne_db_value);

    json j;
    j["format_version"] = 1;
    j["scheme"] = scheme;
    j["source_band"] = source_band;
    j["target_band"] = target_band;
    j["n_samples"] = rows.size();
    j["mean_ccne_db"] = mean_ccne_db(per_sample);
    open_out(path) << j.dump(2) << '\n';
}

// ---- splice spec parsing for `loc train` -----------------------------------
// syntax: "1=measured,2=vae:models/a.ckpt,3=vae:models/b.ckpt"

struct ParsedSplice {
    SpliceSpec spec;
    PredictorRegistry registry;
};

PredictorRegistry::PredictFn vae_predictor_fn(const std::string& ckpt_path) {
    auto model = std::make_shared<VaeModel>(load_vae(ckpt_path));
    return [model](const FingerprintRecord& rec) {
        return predict_band(*model, rec.csi.at(model->source_band.band_index),
                            PredictMode::mean);
    };
}

ParsedSplice parse_splice(const std::string& text, const std::vector<BandSpec>& bands) {
    ParsedSplice out;
    if (text.empty()) { // default: every band of the database, measured
        for (const BandSpec& b : bands) {
            out.spec.band_order.push_back(b.band_index);
            out.spec.per_band_source[b.band_index] = BandSourceSpec{};
        }
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--splice expects band=source, got '" + item + "'");
        const int band = std::stoi(item.substr(0, eq));
        const std::string source = item.substr(eq + 1);
        out.spec.band_order.push_back(band);
        BandSourceSpec src;
        if (source == "measured") {
            src.kind = BandSourceSpec::Kind::measured;
        } else if (source.rfind("vae:", 0) == 0) {
            src.kind = BandSourceSpec::Kind::predicted;
            src.model_id = source; // self-describing: "vae:<checkpoint path>"
            if (!out.registry.has(source))
                out.registry.add(source, vae_predictor_fn(source.substr(4)));
        } else {
            throw std::invalid_argument("--splice source must be 'measured' or "
                                        "'vae:<ckpt>', got '" +
                                        source + "'");
        }
        out.spec.per_band_source[band] = src;
    }
    return out;
}

// rebuild the registry a saved localizer needs from its own splice spec
PredictorRegistry registry_for(const SpliceSpec& spec) {
    PredictorRegistry registry;
    for (const auto& [band, src] : spec.per_band_source) {
        if (src.kind != BandSourceSpec::Kind::predicted) continue;
        if (src.model_id.rfind("vae:", 0) != 0)
            throw std::runtime_error("unknown predictor id: " + src.model_id);
        if (!registry.has(src.model_id))
            registry.add(src.model_id, vae_predictor_fn(src.model_id.substr(4)));
    }
    return registry;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"multi-band CSI fingerprint localization toolkit"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--config", g.config_path, "config file (key = value lines)");
    app.add_option("--set", g.sets, "config override, key=value (repeatable)");

    // ---- db ----------------------------------------------------------------
    CLI::App* db = app.add_subcommand("db", "fingerprint database tools");
    db->require_subcommand(1);

    struct {
        std::string out;
        double snr_db = std::numeric_limits<double>::quiet_NaN();
    } db_build;
    CLI::App* build = db->add_subcommand("build", "simulate a database from the config");
    build->add_option("--out", db_build.out, "output database path")->required();
    build->add_option("--snr-db", db_build.snr_db, "override loc_snr_db for this build");
    build->callback([&] {
        const ExperimentConfig cfg = load_config(g);
        cfg.validate();
        BuildParams params;
        params.samples_per_rp = cfg.samples_per_rp;
        params.samples_per_tp = cfg.samples_per_tp;
        params.snr_db = std::isnan(db_build.snr_db) ? cfg.loc_snr_db : db_build.snr_db;
        params.path_model = cfg.path_model;
        Database out =
            build_database(gen_scenario(cfg.scenario), cfg.bands(), params, cfg.seed);
        save_database(out, db_build.out);
        std::cout << "wrote " << db_build.out << ": " << out.records.size()
                  << " records, " << out.bands.size() << " bands\n";
    });

    struct {
        std::string csv, out;
    } db_ingest;
    CLI::App* ingest = db->add_subcommand("ingest", "import a prototype CSV capture");
    ingest->add_option("--csv", db_ingest.csv, "input CSV")->required();
    ingest->add_option("--out", db_ingest.out, "output database path")->required();
    ingest->callback([&] {
        const ExperimentConfig cfg = load_config(g);
        Database out = ingest_prototype_csv(db_ingest.csv, cfg.bands());
        save_database(out, db_ingest.out);
        std::cout << "wrote " << db_ingest.out << ": " << out.records.size()
                  << " records (" << out.metadata.value("rejected_records", 0)
                  << " rejected)\n";
    });

    struct {
        std::string in, train_out, test_out, policy = "by_point_role";
        double fraction = 0.8;
        std::uint64_t seed = 1;
    } db_split;
    CLI::App* split = db->add_subcommand("split", "split into train/test databases");
    split->add_option("--in", db_split.in, "input database")->required();
    split->add_option("--train-out", db_split.train_out, "train output")->required();
    split->add_option("--test-out", db_split.test_out, "test output")->required();
    split->add_option("--policy", db_split.policy, "by_point_role | random_fraction");
    split->add_option("--fraction", db_split.fraction, "train fraction (random_fraction)");
    split->add_option("--split-seed", db_split.seed, "shuffle seed (random_fraction)");
    split->callback([&] {
        Database in = load_db_checked(db_split.in);
        SplitPolicy policy;
        if (db_split.policy == "by_point_role") {
            policy.kind = SplitPolicy::Kind::by_point_role;
        } else if (db_split.policy == "random_fraction") {
            policy.kind = SplitPolicy::Kind::random_fraction;
            policy.fraction = db_split.fraction;
            policy.seed = db_split.seed;
        } else {
            throw std::invalid_argument("unknown split policy: " + db_split.policy);
        }
        auto [train, test] = split_train_test(in, policy);
        save_database(train, db_split.train_out);
        save_database(test, db_split.test_out);
        std::cout << "train: " << train.records.size() << " records -> "
                  << db_split.train_out << "\n"
                  << "test: " << test.records.size() << " records -> "
                  << db_split.test_out << "\n";
    });

    struct {
        std::string in;
    } db_info;
    CLI::App* info = db->add_subcommand("info", "print database summary");
    info->add_option("--in", db_info.in, "database path")->required();
    info->callback([&] {
        Database in = load_db_checked(db_info.in);
        std::cout << "records: " << in.records.size() << "\n"
                  << "bands: " << in.bands.size() << "\n"
                  << "n_antennas: " << in.n_antennas() << "\n";
        for (const BandSpec& b : in.bands)
            std::cout << "band " << b.band_index << ": center " << fmt_g(b.center_freq_hz)
                      << " Hz, width " << fmt_g(b.bandwidth_hz) << " Hz, "
                      << b.n_subcarriers << " subcarriers\n";
        std::cout << "metadata: " << in.metadata.dump() << "\n";
    });

    // ---- vae ---------------------------------------------------------------
    CLI::App* vae = app.add_subcommand("vae", "cross-band VAE predictor");
    vae->require_subcommand(1);

    struct {
        std::string db, out;
        int target_band = 0;
        int source_band = 0; // 0 = from config
    } vae_train_opts;
    CLI::App* vtrain = vae->add_subcommand("train", "train a source->target predictor");
    vtrain->add_option("--db", vae_train_opts.db, "training database")->required();
    vtrain->add_option("--out", vae_train_opts.out, "output checkpoint")->required();
    vtrain->add_option("--target-band", vae_train_opts.target_band, "band to predict")
        ->required();
    vtrain->add_option("--source-band", vae_train_opts.source_band,
                       "measured band (default: config source_band)");
    vtrain->callback([&] {
        const ExperimentConfig cfg = load_config(g);
        Database train = load_db_checked(vae_train_opts.db);
        const int source =
            vae_train_opts.source_band ? vae_train_opts.source_band : cfg.source_band;
        VaeTrainResult result =
            train_vae(train, source, vae_train_opts.target_band, cfg.vae);
        save_vae(vae_train_opts.out, result.model);
        std::cout << "wrote " << vae_train_opts.out;
        if (!result.epoch_history.empty())
            std::cout << " (final loss " << fmt_g(result.epoch_history.back().total) << ")";
        std::cout << "\n";
    });

    struct {
        std::string model, db, out, mode = "mean";
        std::uint64_t sample_seed = 1;
    } vae_pred;
    CLI::App* vpredict = vae->add_subcommand("predict", "dump predicted CSI per record");
    vpredict->add_option("--model", vae_pred.model, "VAE checkpoint")->required();
    vpredict->add_option("--db", vae_pred.db, "database to predict on")->required();
    vpredict->add_option("--out", vae_pred.out, "output CSV")->required();
    vpredict->add_option("--mode", vae_pred.mode, "mean | sample");
    vpredict->add_option("--sample-seed", vae_pred.sample_seed, "rng seed for sample mode");
    vpredict->callback([&] {
        VaeModel model = load_vae(vae_pred.model);
        Database data = load_db_checked(vae_pred.db);
        PredictMode mode;
        if (vae_pred.mode == "mean")
            mode = PredictMode::mean;
        else if (vae_pred.mode == "sample")
            mode = PredictMode::sample;
        else
            throw std::invalid_argument("--mode must be mean or sample");
        Rng rng(vae_pred.sample_seed);
        std::ofstream out = open_out(vae_pred.out);
        out << "# format_version=1\n";
        out << "sample_id,band_index,antenna,subcarrier,re,im\n";
        for (const FingerprintRecord& rec : data.records) {
            const CsiVector pred = predict_band(
                model, rec.csi.at(model.source_band.band_index), mode, &rng);
            const int n_sc = pred.band.n_subcarriers;
            for (int a = 0; a < pred.n_antennas; ++a)
                for (int k = 0; k < n_sc; ++k) {
                    const cd v = pred.values[static_cast<size_t>(a * n_sc + k)];
                    out << rec.sample_id << ',' << pred.band.band_index << ',' << a << ','
                        << k << ',' << fmt_g(v.real()) << ',' << fmt_g(v.imag()) << '\n';
                }
        }
        std::cout << "wrote " << vae_pred.out << "\n";
    });

    struct {
        std::string model, db, csv, json_path;
    } vae_eval;
    CLI::App* veval = vae->add_subcommand("eval", "CCNE against measured target CSI");
    veval->add_option("--model", vae_eval.model, "VAE checkpoint")->required();
    veval->add_option("--db", vae_eval.db, "evaluation database")->required();
    veval->add_option("--csv", vae_eval.csv, "per-sample CSV output")->required();
    veval->add_option("--json", vae_eval.json_path, "aggregate JSON output")->required();
    veval->callback([&] {
        VaeModel model = load_vae(vae_eval.model);
        Database data = load_db_checked(vae_eval.db);
        const int source = model.source_band.band_index;
        const int target = model.target_band.band_index;
        std::vector<EvalRow> rows;
        rows.reserve(data.records.size());
        for (const FingerprintRecord& rec : data.records) {
            const CsiVector pred =
                predict_band(model, rec.csi.at(source), PredictMode::mean);
            rows.push_back({rec.sample_id, rec.location,
                            ccne_db(pred, rec.csi.at(target))});
        }
        write_eval_csv(vae_eval.csv, rows);
        write_eval_json(vae_eval.json_path, "vae", source, target, rows);
        std::cout << "wrote " << vae_eval.csv << " and " << vae_eval.json_path << "\n";
    });

    // ---- baseline ----------------------------------------------------------
    CLI::App* baseline = app.add_subcommand("baseline", "cross-band baselines");
    baseline->require_subcommand(1);

    struct {
        std::string db, out;
        int target_band = 0;
        int source_band = 0;
    } mlp_opts;
    CLI::App* mlp_train = baseline->add_subcommand("mlp-train", "train the MLP regressor");
    mlp_train->add_option("--db", mlp_opts.db, "training database")->required();
    mlp_train->add_option("--out", mlp_opts.out, "output checkpoint")->required();
    mlp_train->add_option("--target-band", mlp_opts.target_band, "band to predict")
        ->required();
    mlp_train->add_option("--source-band", mlp_opts.source_band,
                          "measured band (default: config source_band)");
    mlp_train->callback([&] {
        const ExperimentConfig cfg = load_config(g);
        Database train = load_db_checked(mlp_opts.db);
        const int source = mlp_opts.source_band ? mlp_opts.source_band : cfg.source_band;
        MlpTrainResult result =
            train_mlp_predictor(train, source, mlp_opts.target_band, cfg.mlp);
        save_mlp_predictor(mlp_opts.out, result.model);
        std::cout << "wrote " << mlp_opts.out;
        if (!result.epoch_mse.empty())
            std::cout << " (final mse " << fmt_g(result.epoch_mse.back()) << ")";
        std::cout << "\n";
    });

    struct {
        std::string db, csv, json_path;
        int target_band = 0;
        int source_band = 0;
    } ar_opts;
    CLI::App* ar_predict =
        baseline->add_subcommand("ar-predict", "AR-EKF extrapolation, CCNE eval");
    ar_predict->add_option("--db", ar_opts.db, "evaluation database")->required();
    ar_predict->add_option("--csv", ar_opts.csv, "per-sample CSV output")->required();
    ar_predict->add_option("--json", ar_opts.json_path, "aggregate JSON output")
        ->required();
    ar_predict->add_option("--target-band", ar_opts.target_band, "band to predict")
        ->required();
    ar_predict->add_option("--source-band", ar_opts.source_band,
                           "measured band (default: config source_band)");
    ar_predict->callback([&] {
        const ExperimentConfig cfg = load_config(g);
        Database data = load_db_checked(ar_opts.db);
        const int source = ar_opts.source_band ? ar_opts.source_band : cfg.source_band;
        const BandSpec target = data.band(ar_opts.target_band);
        std::vector<EvalRow> rows;
        rows.reserve(data.records.size());
        for (const FingerprintRecord& rec : data.records) {
            const CsiVector pred = ar_ekf_predict(rec.csi.at(source), cfg.ar, target);
            rows.push_back({rec.sample_id, rec.location,
                            ccne_db(pred, rec.csi.at(ar_opts.target_band))});
        }
        write_eval_csv(ar_opts.csv, rows);
        write_eval_json(ar_opts.json_path, "ar_ekf", source, ar_opts.target_band, rows);
        std::cout << "wrote " << ar_opts.csv << " and " << ar_opts.json_path << "\n";
    });

    // ---- loc ---------------------------------------------------------------
    CLI::App* loc = app.add_subcommand("loc", "location regression");
    loc->require_subcommand(1);

    struct {
        std::string db, out, splice;
    } loc_train_opts;
    CLI::App* ltrain = loc->add_subcommand("train", "train a localizer");
    ltrain->add_option("--db", loc_train_opts.db, "training database")->required();
    ltrain->add_option("--out", loc_train_opts.out, "output checkpoint")->required();
    ltrain->add_option("--splice", loc_train_opts.splice,
                       "band=source list, e.g. 1=measured,2=vae:m.ckpt "
                       "(default: all bands measured)");
    ltrain->callback([&] {
        const ExperimentConfig cfg = load_config(g);
        Database train = load_db_checked(loc_train_opts.db);
        ParsedSplice parsed = parse_splice(loc_train_opts.splice, train.bands);
        LocTrainResult result = train_localizer(train, parsed.spec, parsed.registry,
                                                cfg.scenario.area, cfg.loc);
        save_localizer(loc_train_opts.out, result.model);
        std::cout << "wrote " << loc_train_opts.out;
        if (!result.epoch_mse.empty())
            std::cout << " (final mse " << fmt_g(result.epoch_mse.back()) << ")";
        std::cout << "\n";
    });

    struct {
        std::string model, db, csv, json_path;
    } loc_eval_opts;
    CLI::App* leval = loc->add_subcommand("eval", "localization error on a database");
    leval->add_option("--model", loc_eval_opts.model, "localizer checkpoint")->required();
    leval->add_option("--db", loc_eval_opts.db, "evaluation database")->required();
    leval->add_option("--csv", loc_eval_opts.csv, "per-sample CSV output");
    leval->add_option("--json", loc_eval_opts.json_path, "aggregate JSON output")
        ->required();
    leval->callback([&] {
        LocalizerModel model = load_localizer(loc_eval_opts.model);
        Database data = load_db_checked(loc_eval_opts.db);
        PredictorRegistry registry = registry_for(model.splice);
        const MetricsReport report = evaluate_localization(model, data, registry);
        if (!loc_eval_opts.csv.empty()) {
            std::ofstream out = open_out(loc_eval_opts.csv);
            out << "# format_version=1\n";
            out << "sample_id,x,y,x_hat,y_hat,sq_err_m2\n";
            for (size_t i = 0; i < data.records.size(); ++i) {
                const FingerprintRecord& rec = data.records[i];
                const Location est = localize_record(model, rec, registry);
                out << rec.sample_id << ',' << fmt_g(rec.location.x) << ','
                    << fmt_g(rec.location.y) << ',' << fmt_g(est.x) << ',' << fmt_g(est.y)
                    << ',' << fmt_g(report.loc_sq_err_m2[i]) << '\n';
            }
        }
        json j;
        j["format_version"] = 1;
        j["n_samples"] = report.loc_sample_count();
        j["mse_m2"] = report.loc_mse_m2;
        j["rmse_m"] = report.loc_rmse_m;
        open_out(loc_eval_opts.json_path) << j.dump(2) << '\n';
        std::cout << "mse_m2 " << fmt_g(report.loc_mse_m2) << ", rmse_m "
                  << fmt_g(report.loc_rmse_m) << "\n";
    });

    struct {
        std::string model, db, out;
    } loc_pred;
    CLI::App* lpredict = loc->add_subcommand("predict", "estimated locations per record");
    lpredict->add_option("--model", loc_pred.model, "localizer checkpoint")->required();
    lpredict->add_option("--db", loc_pred.db, "database to localize")->required();
    lpredict->add_option("--out", loc_pred.out, "output CSV")->required();
    lpredict->callback([&] {
        LocalizerModel model = load_localizer(loc_pred.model);
        Database data = load_db_checked(loc_pred.db);
        PredictorRegistry registry = registry_for(model.splice);
        std::ofstream out = open_out(loc_pred.out);
        out << "# format_version=1\n";
        out << "sample_id,x_hat,y_hat\n";
        for (const FingerprintRecord& rec : data.records) {
            const Location est = localize_record(model, rec, registry);
            out << rec.sample_id << ',' << fmt_g(est.x) << ',' << fmt_g(est.y) << '\n';
        }
        std::cout << "wrote " << loc_pred.out << "\n";
    });

    // ---- metrics -----------------------------------------------------------
    CLI::App* metrics = app.add_subcommand("metrics", "closed-form metric values");
    metrics->require_subcommand(1);

    struct {
        double beta_hz = 0.0;
        double snr_db = 0.0;
        double weight = -1.0;
    } crlb;
    CLI::App* mc = metrics->add_subcommand("crlb", "ranging-error lower bound, m^2");
    mc->add_option("--beta-hz", crlb.beta_hz, "effective bandwidth, Hz")->required();
    mc->add_option("--snr-db", crlb.snr_db, "signal-to-noise ratio, dB")->required();
    mc->add_option("--weight", crlb.weight,
                   "predicted-band quality in [0,1]; prints the spliced bound");
    mc->callback([&] {
        const double snr_linear = std::pow(10.0, crlb.snr_db / 10.0);
        if (crlb.weight < 0.0) {
            CrlbInputs in;
            in.effective_bandwidth_hz = crlb.beta_hz;
            in.snr_linear = snr_linear;
            std::cout << fmt_g(crlb_single(in)) << "\n";
        } else {
            std::cout << fmt_g(crlb_spliced(crlb.beta_hz, crlb.weight, snr_linear))
                      << "\n";
        }
    });

    // ---- experiment ----------------------------------------------------------
    CLI::App* experiment = app.add_subcommand("experiment", "end-to-end pipeline");
    experiment->require_subcommand(1);

    struct {
        std::string out_dir;
        bool dry_run = false;
    } run_opts;
    CLI::App* run = experiment->add_subcommand("run", "execute all configured stages");
    run->add_option("--out", run_opts.out_dir, "run directory (overrides out_dir)");
    run->add_flag("--dry-run", run_opts.dry_run, "validate config and print it, no run");
    run->callback([&] {
        ExperimentConfig cfg = load_config(g);
        if (!run_opts.out_dir.empty()) cfg.out_dir = run_opts.out_dir;
        cfg.validate();
        if (run_opts.dry_run) {
            std::cout << resolve_config(cfg);
            return;
        }
        const std::string dir = run_experiment(cfg, &std::cout);
        std::cout << "run complete: " << dir << "\n";
    });

    // global --config/--set stay usable after any subcommand
    for (CLI::App* s : {db, build, ingest, split, info, vae, vtrain, vpredict, veval,
                        baseline, mlp_train, ar_predict, loc, ltrain, leval, lpredict,
                        metrics, mc, experiment, run})
        s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help/error text itself
        return code == 0 ? exit_ok : exit_usage;
    }
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const VersionMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_version;
    } catch (const TruncationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_truncated;
    } catch (const ChecksumError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_checksum;
    } catch (const SingularArSystemError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_singular_ar;
    } catch (const nn::TrainingDivergedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_diverged;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_stage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_io;
    }
}

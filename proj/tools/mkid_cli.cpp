// Experiment runner: dataset generation, training, freeze-adapt tests,
// verification matrices, and gradient checks over the block library.
//
// Config is JSON; any field can be overridden on the command line with
//   --<path>=<value>
// where <path> uses '.' between levels and '-' instead of '_' inside a
// name, e.g.  --dataset.h-invariant=true --train.epochs=500
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 check miss.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mkid/experiments.hpp"
#include "mkid/gradcheck.hpp"
#include "mkid/metrics.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckMiss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void apply_override(json& cfg, const std::string& arg) {
    // expects --a.b-c=value
    std::string body = arg;
    if (body.rfind("--", 0) == 0) body = body.substr(2);
    const auto eq = body.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + arg + "' must have the form --path=value");
    std::string path = body.substr(0, eq);
    const std::string value = body.substr(eq + 1);
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        for (char& ch : key)
            if (ch == '-') ch = '_';
        if (dot == std::string::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (const json::exception&) {
                parsed = value;  // bare string
            }
            (*node)[key] = parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

// ------------------------------------------------------ config -> domain

mkid::DatasetConfig dataset_from_json(const json& j) {
    mkid::DatasetConfig cfg;
    const std::string structure = j.value("structure", "hammerstein");
    if (structure == "hammerstein")
        cfg.structure = mkid::PlantStructure::Hammerstein;
    else if (structure == "wiener")
        cfg.structure = mkid::PlantStructure::Wiener;
    else
        throw ConfigError("dataset.structure must be hammerstein or wiener");
    cfg.K = j.value("K", std::size_t{4});
    cfg.h_invariant = j.value("h_invariant", false);
    cfg.f_invariant = j.value("f_invariant", false);
    const std::string nl = j.value("nl", "sigmoid");
    if (nl == "sigmoid")
        cfg.nl_family = mkid::NlKind::Sigmoid;
    else if (nl == "clip")
        cfg.nl_family = mkid::NlKind::Clip;
    else if (nl == "identity")
        cfg.nl_family = mkid::NlKind::Identity;
    else if (nl == "complex_sat")
        cfg.nl_family = mkid::NlKind::ComplexSat;
    else
        throw ConfigError("dataset.nl must be sigmoid, clip, identity or complex_sat");
    const std::string exc = j.value("excitation", "white");
    if (exc == "white")
        cfg.excitation = mkid::ExcitationKind::White;
    else if (exc == "colored")
        cfg.excitation = mkid::ExcitationKind::ArColored;
    else
        throw ConfigError("dataset.excitation must be white or colored");
    cfg.ar_rho = j.value("ar_rho", 0.9);
    cfg.N = j.value("N", std::size_t{8000});
    cfg.L_h = j.value("L_h", std::size_t{64});
    cfg.decay_tau = j.value("decay_tau", 0.0);
    cfg.sdr_lo_db = j.value("sdr_lo_db", 4.0);
    cfg.sdr_hi_db = j.value("sdr_hi_db", 32.0);
    cfg.complex_valued = j.value("complex", false);
    return cfg;
}

void model_from_json(const json& j, mkid::CellSpec& cell) {
    cell.model = j.value("notation", "FIR");
    const std::string km = j.value("kernel_mode", "multikernel");
    if (km == "multikernel")
        cell.kernel_mode = mkid::KernelMode::Multikernel;
    else if (km == "single_kernel")
        cell.kernel_mode = mkid::KernelMode::SingleKernel;
    else
        throw ConfigError("model.kernel_mode must be multikernel or single_kernel");
    const std::string dom = j.value("fir_domain", "time");
    if (dom == "time")
        cell.fir_domain = mkid::FirDomain::Time;
    else if (dom == "freq")
        cell.fir_domain = mkid::FirDomain::Freq;
    else
        throw ConfigError("model.fir_domain must be time or freq");
    cell.kernel_lens.clear();
    if (j.contains("kernel_lens"))
        for (const auto& v : j.at("kernel_lens")) cell.kernel_lens.push_back(v.get<std::size_t>());
    cell.nl.depth = j.value("nl_depth", std::size_t{5});
    cell.nl.width = j.value("nl_width", std::size_t{6});
    cell.nl.with_bias = j.value("nl_bias", false);
    cell.memory_polynomial = j.value("memory_polynomial", false);
    cell.mp_order = j.value("mp_order", std::size_t{6});
    cell.mp_taps = j.value("mp_taps", std::size_t{64});
}

void train_from_json(const json& j, mkid::TrainConfig& tc) {
    tc.epochs = j.value("epochs", std::size_t{500});
    tc.adam.lr = j.value("lr", 0.01);
    tc.adam.beta1 = j.value("beta1", 0.9);
    tc.adam.beta2 = j.value("beta2", 0.999);
    tc.adam.eps = j.value("eps", 1e-8);
    tc.halve_on_stall = j.value("halve_on_stall", true);
    tc.stall_epochs = j.value("stall_epochs", std::size_t{100});
    tc.log_period = j.value("log_period", std::size_t{0});
    tc.stop_below_db = j.value("stop_below_db", -1e9);
    tc.patience = j.value("patience", std::size_t{0});
    tc.min_delta_db = j.value("min_delta_db", 0.0);
}

mkid::CellSpec cell_from_config(const json& cfg, std::uint64_t seed) {
    mkid::CellSpec cell;
    cell.data = dataset_from_json(cfg.value("dataset", json::object()));
    model_from_json(cfg.value("model", json::object()), cell);
    if (cell.kernel_lens.empty()) {
        mkid::ModelSpec ms = mkid::ModelSpec::parse(cell.model, cell.fir_domain);
        cell.kernel_lens.assign(ms.fir_count(), cell.data.L_h);
    }
    train_from_json(cfg.value("train", json::object()), cell.train);
    cell.seed = seed;
    return cell;
}

std::uint64_t dataset_hash(const mkid::PlantSet& ps) {
    std::vector<double> acc;
    for (const auto& v : ps.y) acc.insert(acc.end(), v.begin(), v.end());
    for (const auto& v : ps.y_im) acc.insert(acc.end(), v.begin(), v.end());
    return mkid::hash_doubles(acc);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
}

// ------------------------------------------------------------- commands

int cmd_generate(const json& cfg, std::uint64_t seed, const std::string& out) {
    const mkid::DatasetConfig dc = dataset_from_json(cfg.value("dataset", json::object()));
    const mkid::PlantSet ps = mkid::make_dataset(dc, mkid::Rng(seed).split("data"));
    fs::create_directories(out);
    mkid::save_dataset(ps, out);
    std::cout << "dataset: K=" << ps.K << " N=" << ps.N << " hash=" << std::hex
              << dataset_hash(ps) << std::dec << " -> " << out << "\n";
    return 0;
}

int cmd_train(const json& cfg, std::uint64_t seed, const std::string& out, bool check) {
    const mkid::CellSpec cell = cell_from_config(cfg, seed);
    const auto t0 = std::chrono::steady_clock::now();
    mkid::TrainedCell tc = mkid::train_cell_model(cell);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out);
    mkid::write_curve_csv((fs::path(out) / "curve.csv").string(), tc.result.curve);
    const std::string ckpt = (fs::path(out) / "checkpoint.bidm").string();
    std::size_t params = 0;
    if (cell.data.complex_valued) {
        tc.cmodel.save(ckpt);
        params = tc.cmodel.param_count();
    } else {
        tc.model.save(ckpt);
        params = tc.model.param_count();
    }

    json res;
    res["config"] = cfg;
    res["config"]["seed"] = seed;
    res["dataset_hash"] = dataset_hash(tc.data);
    res["min_nmse_db"] = tc.result.best_nmse_db;
    res["best_epoch"] = tc.result.best_epoch;
    res["epochs_run"] = tc.result.curve.size();
    res["param_count"] = params;
    res["wall_seconds"] = secs;
    res["aborted"] = tc.result.aborted;
    write_text(fs::path(out) / "results.json", res.dump(2));
    std::cout << "min NMSE " << tc.result.best_nmse_db << " dB at epoch "
              << tc.result.best_epoch << " (" << params << " params, " << secs << " s)\n";

    if (check && cfg.contains("check_max_nmse_db") &&
        tc.result.best_nmse_db > cfg.at("check_max_nmse_db").get<double>())
        throw CheckMiss("min NMSE " + std::to_string(tc.result.best_nmse_db) +
                        " dB misses check threshold");
    return 0;
}

int cmd_adapt(const json& cfg, std::uint64_t seed, const std::string& out, bool check) {
    if (!cfg.contains("adapt") || !cfg.at("adapt").contains("checkpoint"))
        throw ConfigError("adapt requires adapt.checkpoint");
    const std::string ckpt = cfg.at("adapt").at("checkpoint").get<std::string>();
    mkid::DatasetConfig dc = dataset_from_json(cfg.value("dataset", json::object()));
    mkid::TrainConfig tc;
    train_from_json(cfg.value("train", json::object()), tc);

    const mkid::PlantSet test = mkid::make_dataset(dc, mkid::Rng(seed).split("test-data"));
    json res;
    res["config"] = cfg;
    res["config"]["seed"] = seed;
    res["dataset_hash"] = dataset_hash(test);

    double final_nmse = 0.0;
    if (!dc.complex_valued) {
        const mkid::Model trained = mkid::Model::load(ckpt);
        std::set<std::size_t> frozen;
        mkid::Model adapted =
            mkid::make_adapted_model(trained, dc.K, mkid::Rng(seed).split("adapt-init"), &frozen);
        const auto before = adapted.snapshot_params();
        tc.freeze = frozen;
        const mkid::FrameSpec fs = adapted.frame();
        const mkid::Tensor4 x = mkid::segment_frames(test.x, fs.frame_len, fs.frame_shift);
        const mkid::Tensor4 y = mkid::segment_targets(test.y, fs.frame_len, fs.frame_shift);
        const mkid::TrainResult tr = mkid::train(adapted, x, y, tc);
        final_nmse = tr.best_nmse_db;
        for (std::size_t si : frozen)
            if (adapted.stage(si).params() != before[si])
                throw std::runtime_error("freeze contract violated in stage " +
                                         std::to_string(si));
        fs::create_directories(out);
        adapted.save((fs::path(out) / "adapted.bidm").string());
        mkid::write_curve_csv((fs::path(out) / "curve.csv").string(), tr.curve);
        res["frozen_stages"] = std::vector<std::size_t>(frozen.begin(), frozen.end());
    } else {
        const mkid::CModel trained = mkid::CModel::load(ckpt);
        std::set<std::size_t> frozen;
        mkid::CModel adapted =
            mkid::make_adapted_model(trained, dc.K, mkid::Rng(seed).split("adapt-init"), &frozen);
        const auto before = adapted.snapshot_params();
        tc.freeze = frozen;
        const mkid::FrameSpec fs = adapted.frame();
        const mkid::CTensor x =
            mkid::segment_frames_complex(test.x, test.x_im, fs.frame_len, fs.frame_shift);
        const mkid::CTensor y =
            mkid::segment_targets_complex(test.y, test.y_im, fs.frame_len, fs.frame_shift);
        const mkid::TrainResult tr = mkid::train(adapted, x, y, tc);
        final_nmse = tr.best_nmse_db;
        for (std::size_t si : frozen)
            if (adapted.stage(si).params() != before[si])
                throw std::runtime_error("freeze contract violated in stage " +
                                         std::to_string(si));
        fs::create_directories(out);
        adapted.save((fs::path(out) / "adapted.bidm").string());
        mkid::write_curve_csv((fs::path(out) / "curve.csv").string(), tr.curve);
        res["frozen_stages"] = std::vector<std::size_t>(frozen.begin(), frozen.end());
    }
    res["min_nmse_db"] = final_nmse;
    write_text(fs::path(out) / "results.json", res.dump(2));
    std::cout << "adapted min NMSE " << final_nmse << " dB on " << dc.K << " test plants\n";

    if (check && cfg.contains("check_max_nmse_db") &&
        final_nmse > cfg.at("check_max_nmse_db").get<double>())
        throw CheckMiss("adapted NMSE misses check threshold");
    return 0;
}

int cmd_matrix(const json& cfg, std::uint64_t seed, const std::string& out, std::size_t jobs,
               bool check) {
    if (!cfg.contains("matrix")) throw ConfigError("matrix requires a matrix section");
    const json& mj = cfg.at("matrix");
    const double threshold = mj.value("threshold_db", -35.0);

    std::vector<mkid::CellSpec> cells;
    for (const auto& row : mj.at("rows")) {
        json dcfg = cfg.value("dataset", json::object());
        for (const auto& [k, v] : row.items())
            if (k != "label") dcfg[k] = v;
        for (const auto& mdl : mj.at("models")) {
            mkid::CellSpec cell;
            cell.data = dataset_from_json(dcfg);
            model_from_json(mdl, cell);
            if (cell.kernel_lens.empty() && !cell.memory_polynomial) {
                mkid::ModelSpec ms = mkid::ModelSpec::parse(cell.model, cell.fir_domain);
                cell.kernel_lens.assign(ms.fir_count(), cell.data.L_h);
            }
            train_from_json(cfg.value("train", json::object()), cell.train);
            if (mdl.contains("train")) train_from_json(mdl.at("train"), cell.train);
            cell.row_label = row.value("label", dcfg.dump());
            cell.model_label = mdl.value("label", cell.model);
            cell.seed = seed;
            cells.push_back(cell);
        }
    }

    std::vector<mkid::CellResult> results = mkid::run_cells(cells, jobs);
    mkid::mark_bold(results, threshold);
    fs::create_directories(out);
    write_text(fs::path(out) / "table.json", mkid::table_json(results, threshold));

    for (const auto& r : results) {
        std::cout << r.row_label << " | " << r.model_label << " | ";
        if (r.ok())
            std::cout << r.min_nmse_db << " dB" << (r.bold ? " *" : "");
        else
            std::cout << "ERROR: " << r.error;
        std::cout << " (" << r.seconds << " s)\n";
    }

    bool numeric_failure = false;
    for (const auto& r : results)
        if (!r.ok()) numeric_failure = true;
    if (numeric_failure) throw std::runtime_error("one or more matrix cells failed");

    if (check && mj.contains("expected_bold")) {
        for (const auto& exp : mj.at("expected_bold")) {
            const std::string row = exp.at(0).get<std::string>();
            const std::string mdl = exp.at(1).get<std::string>();
            const bool want = exp.at(2).get<bool>();
            bool found = false;
            for (const auto& r : results)
                if (r.row_label == row && r.model_label == mdl) {
                    found = true;
                    if (r.bold != want)
                        throw CheckMiss("cell (" + row + ", " + mdl + ") bold=" +
                                        (r.bold ? "true" : "false") + ", expected " +
                                        (want ? "true" : "false"));
                }
            if (!found) throw ConfigError("expected_bold names unknown cell (" + row + ", " + mdl + ")");
        }
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    mkid::Rng rng(seed);
    const double tol = 1e-4;
    bool all_ok = true;
    auto report = [&](const std::string& name, const mkid::GradCheckReport& r) {
        const bool ok = r.ok(tol);
        all_ok = all_ok && ok;
        std::cout << name << ": params " << r.max_rel_err_params << ", input "
                  << r.max_rel_err_input << (ok ? "  [pass]" : "  [FAIL]") << "\n";
    };

    {
        mkid::NlBlock b(1, {6, 6, 6, 6, 6}, 6);
        b.init(rng.split("nl"));
        mkid::Tensor4 x({2, 3, 1, 5});
        mkid::Rng r = rng.split("nl-in");
        for (double& v : x.raw()) v = r.normal();
        report("NL (tanh MLP)", mkid::grad_check(b, x));
    }
    {
        mkid::FirTimeBlock b(4, 3, 2, 3, mkid::KernelMode::Multikernel);
        b.init(rng.split("fir"));
        mkid::Tensor4 x({2, 3, 2, 9});
        mkid::Rng r = rng.split("fir-in");
        for (double& v : x.raw()) v = r.normal();
        report("FIR (time domain)", mkid::grad_check(b, x));
    }
    {
        mkid::FirFreqBlock b(4, 16, 3, 2, 3, mkid::KernelMode::Multikernel);
        b.init(rng.split("firf"));
        mkid::Tensor4 x({2, 3, 2, 16});
        mkid::Rng r = rng.split("firf-in");
        for (double& v : x.raw()) v = r.normal();
        report("FIR (frequency domain)", mkid::grad_check(b, x));
    }
    {
        mkid::ComplexFirBlock b(4, 3, 2, 3, mkid::KernelMode::Multikernel);
        b.init(rng.split("cfir"));
        mkid::CTensor x({2, 3, 2, 9});
        mkid::Rng r = rng.split("cfir-in");
        for (double& v : x.re_raw()) v = r.normal();
        for (double& v : x.im_raw()) v = r.normal();
        report("complex FIR (Cartesian)", mkid::grad_check(b, x));
    }
    {
        mkid::ComplexNlBlock b({6, 6, 6});
        b.init(rng.split("cnl"));
        mkid::CTensor x({2, 3, 1, 5});
        mkid::Rng r = rng.split("cnl-in");
        for (double& v : x.re_raw()) v = r.normal();
        for (double& v : x.im_raw()) v = r.normal();
        report("complex NL (polar)", mkid::grad_check(b, x));
    }

    if (!all_ok) throw std::runtime_error("gradient check failure");
    std::cout << "all block types pass at tol " << tol << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiplant block-structured system identification experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_extras();

    std::string config_path, out = "out";
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    bool check = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out, "output directory");
    app.add_option("--jobs", jobs, "concurrent matrix cells");
    app.add_flag("--check", check, "fail (exit 4) when check thresholds are missed");

    auto* c_generate = app.add_subcommand("generate", "synthesize and store a multiplant dataset");
    auto* c_train = app.add_subcommand("train", "train one model on one dataset");
    auto* c_adapt = app.add_subcommand("adapt", "freeze-NL adaptation on unseen plants");
    auto* c_matrix = app.add_subcommand("matrix", "run a rows x models verification table");
    auto* c_gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every block type");
    for (auto* sc : {c_generate, c_train, c_adapt, c_matrix, c_gradcheck})
        sc->allow_extras();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        json cfg = load_config(config_path);
        CLI::App* sub = app.get_subcommands().front();
        for (const std::string& extra : sub->remaining()) apply_override(cfg, extra);
        for (const std::string& extra : app.remaining()) apply_override(cfg, extra);

        if (sub == c_generate) return cmd_generate(cfg, seed, out);
        if (sub == c_train) return cmd_train(cfg, seed, out, check);
        if (sub == c_adapt) return cmd_adapt(cfg, seed, out, check);
        if (sub == c_matrix) return cmd_matrix(cfg, seed, out, jobs, check);
        if (sub == c_gradcheck) return cmd_gradcheck(seed);
        return 2;
    } catch (const CheckMiss& e) {
        std::cerr << "check miss: " << e.what() << "\n";
        return 4;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

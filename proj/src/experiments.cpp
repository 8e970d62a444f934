#include "mkid/experiments.hpp"

#include <atomic>
#include <chrono>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace mkid {

PlantSet make_cell_dataset(const CellSpec& cell) {
    return make_dataset(cell.data, Rng(cell.seed).split("data"));
}

namespace {

ModelSpec cell_model_spec(const CellSpec& cell) {
    ModelSpec ms = ModelSpec::parse(cell.model, cell.fir_domain);
    ms.kernel_mode = cell.kernel_mode;
    ms.plants = cell.data.K;
    ms.complex_valued = cell.data.complex_valued;
    ms.nl = cell.nl;
    if (cell.kernel_lens.size() != ms.fir_count())
        throw std::invalid_argument("cell '" + cell.model_label +
                                    "': kernel_lens count != FIR stage count");
    ms.assign_kernel_lens(cell.kernel_lens);
    ms.validate();
    return ms;
}

CellResult run_mp_cell(const CellSpec& cell, const PlantSet& ps) {
    CellResult r;
    r.row_label = cell.row_label;
    r.model_label = cell.model_label;
    double err = 0.0, ref = 0.0;
    if (!ps.complex_valued) {
        MemoryPolynomial mp = fit_memory_polynomial(ps.x, ps.y, cell.mp_order, cell.mp_taps);
        for (std::size_t k = 0; k < ps.K; ++k) {
            const std::vector<double> yhat = predict_memory_polynomial(mp, k, ps.x[k]);
            for (std::size_t n = 0; n < ps.N; ++n) {
                const double e = yhat[n] - ps.y[k][n];
                err += e * e;
                ref += ps.y[k][n] * ps.y[k][n];
            }
        }
        r.param_count = ps.K * cell.mp_order * cell.mp_taps;
    } else {
        ComplexMemoryPolynomial mp = fit_memory_polynomial_complex(
            ps.x, ps.x_im, ps.y, ps.y_im, cell.mp_order, cell.mp_taps);
        for (std::size_t k = 0; k < ps.K; ++k) {
            std::vector<double> yre, yim;
            predict_memory_polynomial_complex(mp, k, ps.x[k], ps.x_im[k], yre, yim);
            for (std::size_t n = 0; n < ps.N; ++n) {
                const double er = yre[n] - ps.y[k][n], ei = yim[n] - ps.y_im[k][n];
                err += er * er + ei * ei;
                ref += ps.y[k][n] * ps.y[k][n] + ps.y_im[k][n] * ps.y_im[k][n];
            }
        }
        r.param_count = 2 * ps.K * cell.mp_order * cell.mp_taps;
    }
    r.min_nmse_db = nmse_db_energy(err, ref);
    return r;
}

}  // namespace

TrainedCell train_cell_model(const CellSpec& cell) {
    TrainedCell tc;
    tc.data = make_cell_dataset(cell);
    const ModelSpec ms = cell_model_spec(cell);
    const FrameSpec fs = FrameSpec::derive(ms);
    const Rng init = Rng(cell.seed).split("init");
    if (!ms.complex_valued) {
        const Tensor4 x = segment_frames(tc.data.x, fs.frame_len, fs.frame_shift);
        const Tensor4 y = segment_targets(tc.data.y, fs.frame_len, fs.frame_shift);
        tc.model = Model(ms, fs, init);
        tc.result = train(tc.model, x, y, cell.train);
    } else {
        const CTensor x =
            segment_frames_complex(tc.data.x, tc.data.x_im, fs.frame_len, fs.frame_shift);
        const CTensor y =
            segment_targets_complex(tc.data.y, tc.data.y_im, fs.frame_len, fs.frame_shift);
        tc.cmodel = CModel(ms, fs, init);
        tc.result = train(tc.cmodel, x, y, cell.train);
    }
    return tc;
}

CellResult run_cell(const CellSpec& cell) {
    CellResult r;
    r.row_label = cell.row_label;
    r.model_label = cell.model_label;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (cell.memory_polynomial) {
            const PlantSet ps = make_cell_dataset(cell);
            r = run_mp_cell(cell, ps);
        } else {
            TrainedCell tc = train_cell_model(cell);
            r.min_nmse_db = tc.result.best_nmse_db;
            r.best_epoch = tc.result.best_epoch;
            r.epochs_run = tc.result.curve.size();
            r.param_count = cell.data.complex_valued ? tc.cmodel.param_count()
                                                     : tc.model.param_count();
            if (tc.result.aborted) r.error = "training aborted on non-finite loss";
        }
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<CellResult> run_cells(const std::vector<CellSpec>& cells, std::size_t jobs) {
    std::vector<CellResult> results(cells.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(cells[i]);
        return results;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            results[i] = run_cell(cells[i]);
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < std::min(jobs, cells.size()); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return results;
}

void mark_bold(std::vector<CellResult>& results, double threshold_db) {
    for (auto& r : results) r.bold = r.ok() && r.min_nmse_db <= threshold_db;
}

std::string table_json(const std::vector<CellResult>& results, double threshold_db) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : results) {
        nlohmann::json c;
        c["row"] = r.row_label;
        c["model"] = r.model_label;
        if (r.ok()) {
            c["min_nmse_db"] = r.min_nmse_db;
            c["best_epoch"] = r.best_epoch;
            c["epochs"] = r.epochs_run;
            c["params"] = r.param_count;
            c["bold"] = r.bold;
        } else {
            c["error"] = r.error;
        }
        c["seconds"] = r.seconds;
        rows.push_back(c);
    }
    nlohmann::json j;
    j["threshold_db"] = threshold_db;
    j["cells"] = rows;
    return j.dump(2);
}

}  // namespace mkid

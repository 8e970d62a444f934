#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mkid/baselines.hpp"
#include "mkid/model.hpp"
#include "mkid/optim.hpp"
#include "mkid/plants.hpp"

namespace mkid {

// One table cell: a dataset recipe plus a model recipe plus a training
// budget. Everything downstream (dataset, init, training) is derived from
// `seed`, so a cell reruns bit-identically.
struct CellSpec {
    std::string row_label, model_label;
    DatasetConfig data;
    std::string model;  // block notation, e.g. "FIR6-NL6-FIR"
    KernelMode kernel_mode = KernelMode::Multikernel;
    FirDomain fir_domain = FirDomain::Time;
    NlConfig nl;
    std::vector<std::size_t> kernel_lens;  // one entry per FIR stage
    TrainConfig train;
    std::uint64_t seed = 1;
    // set to fit a memory polynomial instead of a neural model
    bool memory_polynomial = false;
    std::size_t mp_order = 6, mp_taps = 64;
};

struct CellResult {
    std::string row_label, model_label;
    double min_nmse_db = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::size_t param_count = 0;
    double seconds = 0.0;
    bool bold = false;  // min_nmse_db <= threshold used by the caller
    std::string error;  // non-empty if the cell failed

    bool ok() const { return error.empty(); }
};

PlantSet make_cell_dataset(const CellSpec& cell);

// Trains (or fits) one cell; exceptions are captured into result.error so
// a bad cell cannot take the whole table down.
CellResult run_cell(const CellSpec& cell);

// Runs cells concurrently with at most `jobs` worker threads; results come
// back in input order regardless of scheduling.
std::vector<CellResult> run_cells(const std::vector<CellSpec>& cells, std::size_t jobs);

void mark_bold(std::vector<CellResult>& results, double threshold_db);

// rows x cols JSON table mirroring the row/model labels
std::string table_json(const std::vector<CellResult>& results, double threshold_db);

// Trained-model + dataset plumbing shared by run_cell and the CLI train
// command; exposed so callers can keep the model (checkpointing, adaptation).
struct TrainedCell {
    Model model;
    CModel cmodel;
    TrainResult result;
    PlantSet data;
};
TrainedCell train_cell_model(const CellSpec& cell);

}  // namespace mkid

#pragma once

#include <set>
#include <string>
#include <vector>

#include "mkid/model.hpp"

namespace mkid {

// Sum of squared differences over all elements; optional gradient
// 2 * (pred - target) w.r.t. pred.
double mse_loss(const Tensor4& pred, const Tensor4& target, Tensor4* grad = nullptr);

// 10*log10(||target - pred||^2 / ||target||^2), floored at -160 dB.
// Throws on zero-energy target.
double nmse_db(const Tensor4& pred, const Tensor4& target);
double nmse_db(const CTensor& pred, const CTensor& target);
double nmse_db_energy(double err_energy, double ref_energy);

struct AdamParams {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam for one flat parameter vector.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grads,
              const AdamParams& hp, double lr_scale = 1.0);
    std::size_t steps() const { return t_; }

private:
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    std::size_t epochs = 500;
    std::set<std::size_t> freeze;  // stage indices skipped by the updater
    AdamParams adam;
    bool halve_on_stall = true;    // halve lr when best NMSE stalls
    std::size_t stall_epochs = 100;
    std::size_t log_period = 0;    // 0 = silent
    double stop_below_db = -1e9;   // end training early once best NMSE clears this
    std::size_t patience = 0;      // 0 = off; give up after this many epochs without a new best
    double min_delta_db = 0.0;     // smallest NMSE improvement that resets the patience counter
};

struct EpochRecord {
    std::size_t epoch;
    double nmse_db;
    double loss;
    double lr;
};

struct TrainResult {
    std::vector<EpochRecord> curve;
    double best_nmse_db = 0.0;
    std::size_t best_epoch = 0;
    std::vector<std::vector<double>> best_params;
    bool aborted = false;          // non-finite loss encountered
};

// Full-batch training; all frames of all plants enter every gradient.
// Leaves the model at its best (minimum NMSE) checkpoint.
TrainResult train(Model& model, const Tensor4& x_frames, const Tensor4& target,
                  const TrainConfig& cfg);
TrainResult train(CModel& model, const CTensor& x_frames, const CTensor& target,
                  const TrainConfig& cfg);

// Freeze-adapt protocol: keep NL stage weights from the trained model,
// rebuild FIR stages for the test plant count, retrain FIR only.
Model make_adapted_model(const Model& trained, std::size_t test_plants, Rng rng,
                         std::set<std::size_t>* frozen_stages);
CModel make_adapted_model(const CModel& trained, std::size_t test_plants, Rng rng,
                          std::set<std::size_t>* frozen_stages);

void write_curve_csv(const std::string& path, const std::vector<EpochRecord>& curve);

}  // namespace mkid

#include "mkid/optim.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace mkid {

double mse_loss(const Tensor4& pred, const Tensor4& target, Tensor4* grad) {
    require_shape(pred.shape(), target.shape(), "mse_loss");
    if (grad) *grad = Tensor4(pred.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.raw().size(); ++i) {
        const double e = pred.raw()[i] - target.raw()[i];
        s += e * e;
        if (grad) grad->raw()[i] = 2.0 * e;
    }
    return s;
}

double nmse_db_energy(double err_energy, double ref_energy) {
    if (ref_energy <= 0.0)
        throw std::invalid_argument("nmse_db: zero-energy target, normalization undefined");
    if (err_energy <= 0.0) return -160.0;
    return std::max(-160.0, 10.0 * std::log10(err_energy / ref_energy));
}

double nmse_db(const Tensor4& pred, const Tensor4& target) {
    require_shape(pred.shape(), target.shape(), "nmse_db");
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < pred.raw().size(); ++i) {
        const double e = pred.raw()[i] - target.raw()[i];
        err += e * e;
        ref += target.raw()[i] * target.raw()[i];
    }
    return nmse_db_energy(err, ref);
}

double nmse_db(const CTensor& pred, const CTensor& target) {
    require_shape(pred.shape(), target.shape(), "nmse_db");
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double er = pred.re_raw()[i] - target.re_raw()[i];
        const double ei = pred.im_raw()[i] - target.im_raw()[i];
        err += er * er + ei * ei;
        ref += target.re_raw()[i] * target.re_raw()[i] +
               target.im_raw()[i] * target.im_raw()[i];
    }
    return nmse_db_energy(err, ref);
}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grads,
                     const AdamParams& hp, double lr_scale) {
    if (m_.size() != params.size()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
        t_ = 0;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t_));
    const double lr = hp.lr * lr_scale;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = hp.beta1 * m_[i] + (1.0 - hp.beta1) * g;
        v_[i] = hp.beta2 * v_[i] + (1.0 - hp.beta2) * g * g;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

namespace {

template <typename TModel, typename TTensor>
TrainResult train_impl(TModel& model, const TTensor& x_frames, const TTensor& target,
                       const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    for (std::size_t si : cfg.freeze)
        if (si >= model.num_stages())
            throw std::invalid_argument("train: frozen stage index out of range");

    double ref_energy = 0.0;
    if constexpr (std::is_same_v<TTensor, Tensor4>) {
        for (double v : target.raw()) ref_energy += v * v;
    } else {
        for (double v : target.re_raw()) ref_energy += v * v;
        for (double v : target.im_raw()) ref_energy += v * v;
    }
    if (ref_energy <= 0.0)
        throw std::invalid_argument("train: zero-energy target, NMSE undefined");

    std::vector<AdamState> adam(model.num_stages());
    for (std::size_t si = 0; si < model.num_stages(); ++si)
        adam[si] = AdamState(model.stage(si).params().size());

    TrainResult res;
    res.best_nmse_db = 1e300;
    double lr_scale = 1.0;
    double patience_mark = 1e300;
    std::size_t stall = 0, since_best = 0;
    std::vector<std::vector<double>> grads;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss = 0.0;
        model.forward_backward(x_frames, target, loss, grads);
        if (!std::isfinite(loss)) {
            res.aborted = true;
            std::cerr << "train: non-finite loss at epoch " << epoch
                      << ", keeping best checkpoint from epoch " << res.best_epoch << "\n";
            break;
        }
        const double nm = nmse_db_energy(loss, ref_energy);
        res.curve.push_back({epoch, nm, loss, cfg.adam.lr * lr_scale});
        if (nm < res.best_nmse_db) {
            res.best_nmse_db = nm;
            res.best_epoch = epoch;
            res.best_params = model.snapshot_params();
            stall = 0;
            if (nm <= cfg.stop_below_db) break;
        } else if (cfg.halve_on_stall && ++stall >= cfg.stall_epochs && lr_scale > 1e-3) {
            lr_scale *= 0.5;
            stall = 0;
        }
        if (nm < patience_mark - cfg.min_delta_db) {
            patience_mark = nm;
            since_best = 0;
        } else if (cfg.patience && ++since_best >= cfg.patience) {
            break;
        }
        if (cfg.log_period && epoch % cfg.log_period == 0)
            std::cerr << "epoch " << epoch << "  nmse " << nm << " dB\n";

        for (std::size_t si = 0; si < model.num_stages(); ++si) {
            if (cfg.freeze.count(si)) continue;
            for (double g : grads[si])
                if (!std::isfinite(g))
                    throw std::runtime_error("train: non-finite gradient in stage " +
                                             std::to_string(si) + " (" + model.stage(si).name() +
                                             ") at epoch " + std::to_string(epoch));
            adam[si].step(model.stage(si).params(), grads[si], cfg.adam, lr_scale);
        }
    }
    if (!res.best_params.empty()) model.restore_params(res.best_params);
    return res;
}

}  // namespace

TrainResult train(Model& model, const Tensor4& x_frames, const Tensor4& target,
                  const TrainConfig& cfg) {
    return train_impl(model, x_frames, target, cfg);
}

TrainResult train(CModel& model, const CTensor& x_frames, const CTensor& target,
                  const TrainConfig& cfg) {
    return train_impl(model, x_frames, target, cfg);
}

namespace {

template <typename TModel>
TModel make_adapted_impl(const TModel& trained, std::size_t test_plants, Rng rng,
                         std::set<std::size_t>* frozen_stages) {
    ModelSpec spec = trained.spec();
    spec.plants = test_plants;
    TModel fresh(spec, trained.frame(), rng);
    std::set<std::size_t> frozen;
    for (std::size_t si = 0; si < fresh.num_stages(); ++si) {
        if (fresh.stage(si).kind() == BlockKind::Nl) {
            const auto& src = trained.stage(si).params();
            if (src.size() != fresh.stage(si).params().size())
                throw std::runtime_error("adapt: NL stage " + std::to_string(si) +
                                         " dimensions incompatible with checkpoint");
            fresh.stage(si).params() = src;
            frozen.insert(si);
        }
    }
    if (frozen_stages) *frozen_stages = frozen;
    return fresh;
}

}  // namespace

Model make_adapted_model(const Model& trained, std::size_t test_plants, Rng rng,
                         std::set<std::size_t>* frozen_stages) {
    return make_adapted_impl(trained, test_plants, rng, frozen_stages);
}

CModel make_adapted_model(const CModel& trained, std::size_t test_plants, Rng rng,
                          std::set<std::size_t>* frozen_stages) {
    return make_adapted_impl(trained, test_plants, rng, frozen_stages);
}

void write_curve_csv(const std::string& path, const std::vector<EpochRecord>& curve) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "epoch,nmse_db,loss,lr\n";
    for (const auto& r : curve)
        os << r.epoch << "," << r.nmse_db << "," << r.loss << "," << r.lr << "\n";
}

}  // namespace mkid

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mkid/blocks.hpp"

namespace mkid {

enum class FirDomain { Time, Freq };

struct StageSpec {
    enum class Kind { Fir, Nl } kind;
    std::size_t out_channels = 1;
    std::size_t kernel_len = 0;           // FIR only, assigned after parsing
    FirDomain fir_domain = FirDomain::Time;  // FIR only
};

struct NlConfig {
    std::size_t depth = 5;   // number of hidden layers D
    std::size_t width = 6;   // internal units per hidden layer P_l
    bool with_bias = false;
};

// Block-structured SISO model description, e.g. "FIR6-NL6-FIR".
struct ModelSpec {
    std::vector<StageSpec> stages;
    KernelMode kernel_mode = KernelMode::Multikernel;
    std::size_t plants = 1;
    bool complex_valued = false;
    NlConfig nl;

    // Parses the block notation; subscripts are connecting channel widths,
    // a missing subscript means one channel. Throws with the offending
    // position on malformed input.
    static ModelSpec parse(const std::string& notation, FirDomain default_domain = FirDomain::Time);

    void assign_kernel_lens(const std::vector<std::size_t>& lens);
    std::size_t fir_count() const;
    std::size_t kernel_len_sum() const;
    std::string notation() const;
    void validate() const;

    std::string to_json() const;
    static ModelSpec from_json(const std::string& j);
};

struct FrameSpec {
    std::size_t frame_len = 0;   // M
    std::size_t frame_shift = 0; // R
    std::size_t total_memory = 0;  // sum(L_i - 1) + 1 over FIR stages

    // M = 2 * sum(L_i); a single FIR keeps every valid sample (R = M-L+1),
    // two or more use R = floor((M - sum(L_i) + 1) / 2).
    static FrameSpec derive(const ModelSpec& spec);
    static FrameSpec derive(const ModelSpec& spec, std::size_t frame_len);
};

Tensor4 segment_frames(const std::vector<std::vector<double>>& x_per_plant,
                       std::size_t M, std::size_t R);
CTensor segment_frames_complex(const std::vector<std::vector<double>>& re,
                               const std::vector<std::vector<double>>& im,
                               std::size_t M, std::size_t R);
// Target frames: the last R samples of each length-M frame.
Tensor4 segment_targets(const std::vector<std::vector<double>>& y_per_plant,
                        std::size_t M, std::size_t R);
CTensor segment_targets_complex(const std::vector<std::vector<double>>& re,
                                const std::vector<std::vector<double>>& im,
                                std::size_t M, std::size_t R);

class Model {
public:
    Model() = default;
    Model(const ModelSpec& spec, const FrameSpec& frame, Rng rng);
    Model(const Model& other);
    Model& operator=(const Model& other);
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelSpec& spec() const { return spec_; }
    const FrameSpec& frame() const { return frame_; }
    std::size_t num_stages() const { return stages_.size(); }
    Block& stage(std::size_t i) { return *stages_[i]; }
    const Block& stage(std::size_t i) const { return *stages_[i]; }
    std::size_t param_count() const;

    // Full chain; the prediction is the last R time samples of the result.
    Tensor4 forward(const Tensor4& x_frames) const;
    Tensor4 predict(const Tensor4& x_frames) const;

    // Gradients of 0.5 * sum((pred - target)^2)-style losses: callers pass
    // d(loss)/d(pred) for the (T,K,1,R) prediction; returns per-stage
    // parameter gradients.
    std::vector<std::vector<double>> backward(const Tensor4& x_frames,
                                              const Tensor4& grad_pred) const;

    // Single-pass training step helper: runs the chain once, slices the
    // prediction, computes loss = sum((pred-target)^2) and its gradients.
    Tensor4 forward_backward(const Tensor4& x_frames, const Tensor4& target,
                             double& loss, std::vector<std::vector<double>>& grads) const;

    void save(const std::string& path) const;
    static Model load(const std::string& path);

    std::vector<std::vector<double>> snapshot_params() const;
    void restore_params(const std::vector<std::vector<double>>& snap);

private:
    ModelSpec spec_;
    FrameSpec frame_;
    std::vector<std::unique_ptr<Block>> stages_;
};

class CModel {
public:
    CModel() = default;
    CModel(const ModelSpec& spec, const FrameSpec& frame, Rng rng);
    CModel(const CModel& other);
    CModel& operator=(const CModel& other);
    CModel(CModel&&) = default;
    CModel& operator=(CModel&&) = default;

    const ModelSpec& spec() const { return spec_; }
    const FrameSpec& frame() const { return frame_; }
    std::size_t num_stages() const { return stages_.size(); }
    CBlock& stage(std::size_t i) { return *stages_[i]; }
    const CBlock& stage(std::size_t i) const { return *stages_[i]; }
    std::size_t param_count() const;

    CTensor forward(const CTensor& x_frames) const;
    CTensor predict(const CTensor& x_frames) const;
    std::vector<std::vector<double>> backward(const CTensor& x_frames,
                                              const CTensor& grad_pred) const;
    CTensor forward_backward(const CTensor& x_frames, const CTensor& target,
                             double& loss, std::vector<std::vector<double>>& grads) const;

    void save(const std::string& path) const;
    static CModel load(const std::string& path);

    std::vector<std::vector<double>> snapshot_params() const;
    void restore_params(const std::vector<std::vector<double>>& snap);

private:
    ModelSpec spec_;
    FrameSpec frame_;
    std::vector<std::unique_ptr<CBlock>> stages_;
};

}  // namespace mkid

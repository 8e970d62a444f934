#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mkid/rng.hpp"
#include "mkid/tensor.hpp"

namespace mkid {

enum class BlockKind { Nl, FirTime, FirFreq };

enum class KernelMode { Multikernel, SingleKernel };

// A differentiable unit. Parameters live in one flat vector so the
// optimizer and the gradient checker can stay generic.
class Block {
public:
    virtual ~Block() = default;

    virtual std::string name() const = 0;
    virtual BlockKind kind() const = 0;
    virtual std::size_t in_channels() const = 0;
    virtual std::size_t out_channels() const = 0;
    virtual Shape4 output_shape(const Shape4& in) const = 0;

    virtual Tensor4 forward(const Tensor4& x) const = 0;
    // Accumulates parameter gradients into grad_params (same length as
    // params()) and returns the gradient w.r.t. the input.
    virtual Tensor4 backward(const Tensor4& x, const Tensor4& upstream,
                             std::vector<double>& grad_params) const = 0;

    virtual void init(Rng rng) = 0;
    virtual std::unique_ptr<Block> clone() const = 0;

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

protected:
    std::vector<double> params_;
};

// Stateless MLP arithmetic shared by the real NL block and the polar
// complex variant. Layer l maps width dims[l] -> dims[l+1] through tanh;
// the final matrix is the linear output layer.
struct NlCore {
    std::size_t in = 1;                 // P_0 = I
    std::vector<std::size_t> hidden;    // P_1 .. P_D
    std::size_t out = 1;                // P
    bool with_bias = false;

    std::size_t depth() const { return hidden.size(); }
    std::size_t max_width() const;
    std::size_t param_count() const;
    void init_params(std::vector<double>& p, Rng rng) const;
    // call once after the widths are set; caches the per-layer weight offsets
    void finalize();

    // work buffers must hold (depth()+2) * max_width() doubles
    void forward_sample(const double* p, const double* x, double* acts) const;
    // acts as produced by forward_sample; accumulates into gp, writes grad_x
    void backward_sample(const double* p, const double* acts, const double* up,
                         double* gp, double* grad_x, double* scratch) const;

    std::vector<std::size_t> offs;  // weight-matrix offsets, set by finalize()
};

class NlBlock : public Block {
public:
    NlBlock(std::size_t in, std::vector<std::size_t> hidden, std::size_t out,
            bool with_bias = false);

    std::string name() const override { return "NL"; }
    BlockKind kind() const override { return BlockKind::Nl; }
    std::size_t in_channels() const override { return core_.in; }
    std::size_t out_channels() const override { return core_.out; }
    Shape4 output_shape(const Shape4& in) const override;

    Tensor4 forward(const Tensor4& x) const override;
    Tensor4 backward(const Tensor4& x, const Tensor4& upstream,
                     std::vector<double>& grad_params) const override;
    void init(Rng rng) override { core_.init_params(params_, rng); }
    std::unique_ptr<Block> clone() const override { return std::make_unique<NlBlock>(*this); }

    const NlCore& core() const { return core_; }

private:
    NlCore core_;
};

// Multikernel FIR block, "valid" convolution along the time axis.
// Kernel is logically w[l, kappa, i, p]; stored as (kappa, p, i, l) so the
// lag loop runs contiguously.
class FirTimeBlock : public Block {
public:
    FirTimeBlock(std::size_t L, std::size_t K, std::size_t I, std::size_t P,
                 KernelMode mode);

    std::string name() const override { return "FIR"; }
    BlockKind kind() const override { return BlockKind::FirTime; }
    std::size_t in_channels() const override { return I_; }
    std::size_t out_channels() const override { return P_; }
    Shape4 output_shape(const Shape4& in) const override;

    Tensor4 forward(const Tensor4& x) const override;
    Tensor4 backward(const Tensor4& x, const Tensor4& upstream,
                     std::vector<double>& grad_params) const override;
    void init(Rng rng) override;
    std::unique_ptr<Block> clone() const override { return std::make_unique<FirTimeBlock>(*this); }

    std::size_t kernel_len() const { return L_; }
    KernelMode mode() const { return mode_; }
    std::size_t kernel_plants() const { return Kk_; }

    double& w(std::size_t l, std::size_t kappa, std::size_t i, std::size_t p) {
        return params_[widx(l, kappa, i, p)];
    }
    std::size_t widx(std::size_t l, std::size_t kappa, std::size_t i, std::size_t p) const {
        return ((kappa * P_ + p) * I_ + i) * L_ + l;
    }

private:
    std::size_t L_, Kk_, I_, P_;
    KernelMode mode_;
};

// Overlap-save frequency-domain FIR block. Parameters are free real and
// imaginary spectra of shape (M, K, I, P); each forward applies the
// time-support constraint (first L taps only) before use.
class FirFreqBlock : public Block {
public:
    FirFreqBlock(std::size_t L, std::size_t M, std::size_t K, std::size_t I,
                 std::size_t P, KernelMode mode, bool allow_naive_dft = false);

    std::string name() const override { return "FIRf"; }
    BlockKind kind() const override { return BlockKind::FirFreq; }
    std::size_t in_channels() const override { return I_; }
    std::size_t out_channels() const override { return P_; }
    Shape4 output_shape(const Shape4& in) const override;

    Tensor4 forward(const Tensor4& x) const override;
    Tensor4 backward(const Tensor4& x, const Tensor4& upstream,
                     std::vector<double>& grad_params) const override;
    void init(Rng rng) override;
    std::unique_ptr<Block> clone() const override { return std::make_unique<FirFreqBlock>(*this); }

    std::size_t kernel_len() const { return L_; }
    std::size_t frame_len() const { return M_; }
    std::size_t valid_len() const { return M_ - L_ + 1; }
    KernelMode mode() const { return mode_; }
    std::size_t kernel_plants() const { return Kk_; }

    // Zero time-domain taps L..M-1 of every (kappa,i,p) spectrum.
    // Idempotent and self-adjoint; also used on the spectral gradient.
    std::vector<double> constrained(const std::vector<double>& raw) const;
    void constrain_inplace() { params_ = constrained(params_); }

    // layout: re plane then im plane, each ((kappa*I+i)*P+p)*M + m
    std::size_t sidx(std::size_t kappa, std::size_t i, std::size_t p, std::size_t m) const {
        return ((kappa * I_ + i) * P_ + p) * M_ + m;
    }
    std::size_t plane() const { return Kk_ * I_ * P_ * M_; }

private:
    std::size_t L_, M_, Kk_, I_, P_;
    KernelMode mode_;
    bool allow_naive_dft_;
};

// ----- complex-baseband blocks -----

class CBlock {
public:
    virtual ~CBlock() = default;
    virtual std::string name() const = 0;
    virtual BlockKind kind() const = 0;
    virtual std::size_t in_channels() const = 0;
    virtual std::size_t out_channels() const = 0;
    virtual Shape4 output_shape(const Shape4& in) const = 0;
    virtual CTensor forward(const CTensor& x) const = 0;
    virtual CTensor backward(const CTensor& x, const CTensor& upstream,
                             std::vector<double>& grad_params) const = 0;
    virtual void init(Rng rng) = 0;
    virtual std::unique_ptr<CBlock> clone() const = 0;

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

protected:
    std::vector<double> params_;
};

// Cartesian complex FIR: two real kernels, (a+jb) conv (c+jd).
class ComplexFirBlock : public CBlock {
public:
    ComplexFirBlock(std::size_t L, std::size_t K, std::size_t I, std::size_t P,
                    KernelMode mode);

    std::string name() const override { return "cFIR"; }
    BlockKind kind() const override { return BlockKind::FirTime; }
    std::size_t in_channels() const override { return I_; }
    std::size_t out_channels() const override { return P_; }
    Shape4 output_shape(const Shape4& in) const override;
    CTensor forward(const CTensor& x) const override;
    CTensor backward(const CTensor& x, const CTensor& upstream,
                     std::vector<double>& grad_params) const override;
    void init(Rng rng) override;
    std::unique_ptr<CBlock> clone() const override { return std::make_unique<ComplexFirBlock>(*this); }

    std::size_t kernel_len() const { return L_; }
    KernelMode mode() const { return mode_; }
    std::size_t kernel_plants() const { return Kk_; }

    std::size_t widx(std::size_t l, std::size_t kappa, std::size_t i, std::size_t p) const {
        return ((kappa * P_ + p) * I_ + i) * L_ + l;
    }
    std::size_t plane() const { return Kk_ * P_ * I_ * L_; }

private:
    std::size_t L_, Kk_, I_, P_;
    KernelMode mode_;
};

// Polar complex NL: real NL block on the magnitude, phase passed through.
// Below |z| = eps the output is exactly zero.
class ComplexNlBlock : public CBlock {
public:
    explicit ComplexNlBlock(std::vector<std::size_t> hidden, bool with_bias = false);

    static constexpr double kMagEps = 1e-12;

    std::string name() const override { return "cNL"; }
    BlockKind kind() const override { return BlockKind::Nl; }
    std::size_t in_channels() const override { return 1; }
    std::size_t out_channels() const override { return 1; }
    Shape4 output_shape(const Shape4& in) const override { return in; }
    CTensor forward(const CTensor& z) const override;
    CTensor backward(const CTensor& z, const CTensor& upstream,
                     std::vector<double>& grad_params) const override;
    void init(Rng rng) override { core_.init_params(params_, rng); }
    std::unique_ptr<CBlock> clone() const override { return std::make_unique<ComplexNlBlock>(*this); }

    const NlCore& core() const { return core_; }

private:
    NlCore core_;
};

}  // namespace mkid

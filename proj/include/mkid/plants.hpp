#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mkid/rng.hpp"

namespace mkid {

enum class NlKind { Identity, Sigmoid, Clip, ComplexSat };
enum class PlantStructure { Wiener, Hammerstein };
enum class ExcitationKind { White, ArColored };

struct NonlinearityDesc {
    NlKind kind = NlKind::Identity;
    double gamma = 1.0;   // sigmoid / complex_sat output scale
    double delta = 1.0;   // sigmoid / complex_sat input scale
    double x_max = 1.0;   // clip level
    double achieved_sdr_db = 160.0;
};

std::vector<std::vector<double>> gen_excitation(ExcitationKind kind, std::size_t N,
                                                std::size_t K, Rng rng,
                                                double ar_rho = 0.9);

// Exponentially decaying Gaussian noise, normalized to unit energy.
std::vector<double> gen_impulse_response(std::size_t L_h, double decay_tau, Rng rng);

// Causal convolution, x treated as zero for n < 0; output length N.
std::vector<double> apply_lti(const std::vector<double>& x, const std::vector<double>& h);

std::vector<double> apply_nonlinearity(const std::vector<double>& x, const NonlinearityDesc& f);
// complex_sat: saturation on the magnitude, phase preserved
void apply_nonlinearity_complex(std::vector<double>& re, std::vector<double>& im,
                                const NonlinearityDesc& f);

// Signal-to-distortion ratio of the best linear fit alpha*x against the
// nonlinear residual f(x) - alpha*x, in dB (capped at 160).
double compute_sdr(const std::vector<double>& x, const std::vector<double>& fx);
double compute_sdr_complex(const std::vector<double>& xre, const std::vector<double>& xim,
                           const std::vector<double>& fre, const std::vector<double>& fim);

// Bisection on delta (sigmoid / complex_sat) or x_max (clip) over a unit
// Gaussian reference sample until the achieved SDR is within tol of the
// target.
NonlinearityDesc calibrate_sdr(NlKind kind, double target_sdr_db, Rng rng,
                               double tol_db = 0.25, std::size_t ref_samples = 1000000);

struct PlantSet {
    PlantStructure structure = PlantStructure::Hammerstein;
    std::size_t K = 0, N = 0;
    bool h_invariant = false, f_invariant = false;
    bool complex_valued = false;
    std::vector<std::vector<double>> h, h_im;      // impulse responses per plant
    std::vector<NonlinearityDesc> f;               // nonlinearity per plant
    std::vector<std::vector<double>> x, x_im;      // inputs per plant
    std::vector<std::vector<double>> y, y_im;      // outputs per plant
};

struct DatasetConfig {
    PlantStructure structure = PlantStructure::Hammerstein;
    std::size_t K = 4;
    bool h_invariant = false;
    bool f_invariant = false;
    NlKind nl_family = NlKind::Sigmoid;  // Identity gives a pure LTI multiplant
    ExcitationKind excitation = ExcitationKind::White;
    double ar_rho = 0.9;        // AR(1) coefficient when excitation is colored
    std::size_t N = 8000;
    std::size_t L_h = 64;
    double decay_tau = 0.0;     // 0 -> L_h / 8
    double sdr_lo_db = 4.0, sdr_hi_db = 32.0;
    bool complex_valued = false;
};

PlantSet make_dataset(const DatasetConfig& cfg, Rng rng);

// Regenerate outputs from the stored components (structure oracle).
void compute_outputs(const PlantSet& ps, std::vector<std::vector<double>>& y,
                     std::vector<std::vector<double>>& y_im);
std::vector<std::vector<double>> regenerate_outputs(const PlantSet& ps);

void save_dataset(const PlantSet& ps, const std::string& dir);
PlantSet load_dataset(const std::string& dir);

std::uint64_t hash_doubles(const std::vector<double>& v);

}  // namespace mkid

#pragma once

#include <string>
#include <vector>

namespace mkid {

struct ErleCurve {
    std::vector<double> values_db;  // per sample, capped at 160 dB
    double alpha = 0.999;
};

// ERLE[n] = 10 log10(P_d[n] / P_e[n]) with both powers tracked by
// exponential smoothing P[n] = alpha*P[n-1] + (1-alpha)*v[n].
ErleCurve erle_curve(const std::vector<double>& d, const std::vector<double>& d_hat,
                     double smoothing_alpha = 0.999);

// Multi-signal variant: powers averaged in the linear domain before the log.
ErleCurve erle_curve(const std::vector<std::vector<double>>& d,
                     const std::vector<std::vector<double>>& d_hat,
                     double smoothing_alpha = 0.999);

struct PsdEstimate {
    std::vector<double> freqs;     // normalized, cycles/sample
    std::vector<double> power_db;  // per bin
    std::size_t seg_len = 0;
    double overlap_frac = 0.5;
    std::string window = "hann";
};

// Welch average of Hann-windowed periodograms, normalized by the window
// power so white noise reads its variance per bin.  Real input folds onto
// seg_len/2+1 one-sided bins; complex input keeps all seg_len bins (shifted
// to [-0.5, 0.5)).
PsdEstimate psd_welch(const std::vector<double>& x, std::size_t seg_len = 256,
                      double overlap_frac = 0.5);
PsdEstimate psd_welch_complex(const std::vector<double>& xre, const std::vector<double>& xim,
                              std::size_t seg_len = 256, double overlap_frac = 0.5);

void write_curve_csv(const std::string& path, const std::vector<double>& index,
                     const std::vector<double>& value_db);

}  // namespace mkid

#include "mkid/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mkid/dft.hpp"

namespace mkid {

namespace {

constexpr double kErleCapDb = 160.0;
constexpr double kErleFloor = 1e-16;

void smooth_powers(const std::vector<double>& d, const std::vector<double>& d_hat,
                   double alpha, std::vector<double>& pd, std::vector<double>& pe) {
    double sd = 0.0, se = 0.0;
    for (std::size_t n = 0; n < d.size(); ++n) {
        const double e = d[n] - d_hat[n];
        sd = alpha * sd + (1.0 - alpha) * d[n] * d[n];
        se = alpha * se + (1.0 - alpha) * e * e;
        pd[n] += sd;
        pe[n] += se;
    }
}

}  // namespace

ErleCurve erle_curve(const std::vector<std::vector<double>>& d,
                     const std::vector<std::vector<double>>& d_hat,
                     double smoothing_alpha) {
    if (d.empty() || d.size() != d_hat.size())
        throw std::invalid_argument("erle_curve: signal count mismatch");
    if (!(smoothing_alpha > 0.0 && smoothing_alpha < 1.0))
        throw std::invalid_argument("erle_curve: smoothing_alpha must be in (0,1)");
    const std::size_t N = d[0].size();
    std::vector<double> pd(N, 0.0), pe(N, 0.0);
    for (std::size_t s = 0; s < d.size(); ++s) {
        if (d[s].size() != N || d_hat[s].size() != N)
            throw std::invalid_argument("erle_curve: length mismatch");
        smooth_powers(d[s], d_hat[s], smoothing_alpha, pd, pe);
    }
    ErleCurve c;
    c.alpha = smoothing_alpha;
    c.values_db.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
        if (pd[n] <= 0.0) {
            c.values_db[n] = 0.0;
            continue;
        }
        // floor is relative to the echo power so perfect cancellation still hits the cap
        const double v = 10.0 * std::log10(pd[n] / std::max(pe[n], pd[n] * kErleFloor));
        c.values_db[n] = std::min(v, kErleCapDb);
    }
    return c;
}

ErleCurve erle_curve(const std::vector<double>& d, const std::vector<double>& d_hat,
                     double smoothing_alpha) {
    return erle_curve(std::vector<std::vector<double>>{d},
                      std::vector<std::vector<double>>{d_hat}, smoothing_alpha);
}

namespace {

PsdEstimate welch_impl(const std::vector<double>& xre, const std::vector<double>* xim,
                       std::size_t seg_len, double overlap_frac) {
    if (seg_len < 2 || (seg_len & (seg_len - 1)) != 0)
        throw std::invalid_argument("psd_welch: seg_len must be a power of two >= 2");
    if (xre.size() < seg_len)
        throw std::invalid_argument("psd_welch: sequence shorter than one segment");
    if (!(overlap_frac >= 0.0 && overlap_frac < 1.0))
        throw std::invalid_argument("psd_welch: overlap_frac must be in [0,1)");
    const std::size_t N = xre.size();
    const std::size_t hop =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::lround(seg_len * (1.0 - overlap_frac))));

    std::vector<double> win(seg_len);
    double wpow = 0.0;
    for (std::size_t n = 0; n < seg_len; ++n) {
        win[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / seg_len);
        wpow += win[n] * win[n];
    }

    std::vector<double> acc(seg_len, 0.0);
    std::vector<double> re(seg_len), im(seg_len);
    std::size_t nseg = 0;
    for (std::size_t start = 0; start + seg_len <= N; start += hop, ++nseg) {
        for (std::size_t n = 0; n < seg_len; ++n) {
            re[n] = win[n] * xre[start + n];
            im[n] = xim ? win[n] * (*xim)[start + n] : 0.0;
        }
        dft_inplace(re.data(), im.data(), seg_len, false);
        for (std::size_t k = 0; k < seg_len; ++k)
            acc[k] += (re[k] * re[k] + im[k] * im[k]) / wpow;
    }
    for (double& v : acc) v /= static_cast<double>(nseg);

    PsdEstimate est;
    est.seg_len = seg_len;
    est.overlap_frac = overlap_frac;
    if (!xim) {
        const std::size_t half = seg_len / 2;
        est.freqs.resize(half + 1);
        est.power_db.resize(half + 1);
        for (std::size_t k = 0; k <= half; ++k) {
            est.freqs[k] = static_cast<double>(k) / seg_len;
            est.power_db[k] = 10.0 * std::log10(std::max(acc[k], 1e-300));
        }
    } else {
        // shift to [-0.5, 0.5)
        est.freqs.resize(seg_len);
        est.power_db.resize(seg_len);
        const std::size_t half = seg_len / 2;
        for (std::size_t k = 0; k < seg_len; ++k) {
            const std::size_t src = (k + half) % seg_len;
            est.freqs[k] = (static_cast<double>(k) - static_cast<double>(half)) / seg_len;
            est.power_db[k] = 10.0 * std::log10(std::max(acc[src], 1e-300));
        }
    }
    return est;
}

}  // namespace

PsdEstimate psd_welch(const std::vector<double>& x, std::size_t seg_len, double overlap_frac) {
    return welch_impl(x, nullptr, seg_len, overlap_frac);
}

PsdEstimate psd_welch_complex(const std::vector<double>& xre, const std::vector<double>& xim,
                              std::size_t seg_len, double overlap_frac) {
    if (xre.size() != xim.size())
        throw std::invalid_argument("psd_welch: re/im length mismatch");
    return welch_impl(xre, &xim, seg_len, overlap_frac);
}

void write_curve_csv(const std::string& path, const std::vector<double>& index,
                     const std::vector<double>& value_db) {
    if (index.size() != value_db.size())
        throw std::invalid_argument("write_curve_csv: length mismatch");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "index,value_db\n";
    for (std::size_t i = 0; i < index.size(); ++i)
        os << index[i] << "," << value_db[i] << "\n";
}

}  // namespace mkid

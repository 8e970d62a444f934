#include "mkid/plants.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mkid {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::vector<double>> gen_excitation(ExcitationKind kind, std::size_t N,
                                                std::size_t K, Rng rng, double ar_rho) {
    if (N < 1) throw std::invalid_argument("gen_excitation: N must be >= 1");
    if (!(ar_rho > -1.0 && ar_rho < 1.0))
        throw std::invalid_argument("gen_excitation: ar_rho must be in (-1, 1)");
    std::vector<std::vector<double>> out(K);
    for (std::size_t k = 0; k < K; ++k) {
        Rng r = rng.split(k);
        out[k].resize(N);
        if (kind == ExcitationKind::White) {
            for (std::size_t n = 0; n < N; ++n) out[k][n] = r.normal();
        } else {
            // AR(1) stand-in for the self-correlation of speech
            const double rho = ar_rho;
            const double g = std::sqrt(1.0 - rho * rho);
            double prev = r.normal();
            out[k][0] = prev;
            for (std::size_t n = 1; n < N; ++n) {
                prev = rho * prev + g * r.normal();
                out[k][n] = prev;
            }
        }
    }
    return out;
}

std::vector<double> gen_impulse_response(std::size_t L_h, double decay_tau, Rng rng) {
    if (L_h < 1 || decay_tau <= 0.0)
        throw std::invalid_argument("gen_impulse_response: need L_h >= 1 and decay_tau > 0");
    std::vector<double> h(L_h);
    double energy = 0.0;
    for (std::size_t l = 0; l < L_h; ++l) {
        h[l] = rng.normal() * std::exp(-static_cast<double>(l) / decay_tau);
        energy += h[l] * h[l];
    }
    const double s = 1.0 / std::sqrt(energy);
    for (double& v : h) v *= s;
    return h;
}

std::vector<double> apply_lti(const std::vector<double>& x, const std::vector<double>& h) {
    const std::size_t N = x.size(), L = h.size();
    std::vector<double> d(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const std::size_t lmax = std::min(L - 1, n);
        double acc = 0.0;
        for (std::size_t l = 0; l <= lmax; ++l) acc += h[l] * x[n - l];
        d[n] = acc;
    }
    return d;
}

std::vector<double> apply_nonlinearity(const std::vector<double>& x, const NonlinearityDesc& f) {
    std::vector<double> y(x.size());
    switch (f.kind) {
        case NlKind::Identity:
            y = x;
            break;
        case NlKind::Sigmoid:
            for (std::size_t n = 0; n < x.size(); ++n)
                y[n] = f.gamma * std::atan(f.delta * x[n]);
            break;
        case NlKind::Clip:
            for (std::size_t n = 0; n < x.size(); ++n)
                y[n] = std::fabs(x[n]) <= f.x_max ? x[n] : (x[n] > 0 ? f.x_max : -f.x_max);
            break;
        case NlKind::ComplexSat:
            throw std::invalid_argument("apply_nonlinearity: complex_sat needs complex input");
    }
    return y;
}

void apply_nonlinearity_complex(std::vector<double>& re, std::vector<double>& im,
                                const NonlinearityDesc& f) {
    if (f.kind == NlKind::Identity) return;
    if (f.kind != NlKind::ComplexSat)
        throw std::invalid_argument("apply_nonlinearity_complex: kind/domain mismatch");
    for (std::size_t n = 0; n < re.size(); ++n) {
        const double r = std::hypot(re[n], im[n]);
        if (r < 1e-300) {
            re[n] = im[n] = 0.0;
            continue;
        }
        const double g = f.gamma * std::atan(f.delta * r) / r;
        re[n] *= g;
        im[n] *= g;
    }
}

double compute_sdr(const std::vector<double>& x, const std::vector<double>& fx) {
    if (x.size() != fx.size()) throw std::invalid_argument("compute_sdr: length mismatch");
    double sxx = 0.0, sxf = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        sxx += x[n] * x[n];
        sxf += x[n] * fx[n];
    }
    if (sxx <= 0.0) throw std::invalid_argument("compute_sdr: zero input energy");
    const double alpha = sxf / sxx;
    double lin = 0.0, res = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double l = alpha * x[n];
        const double e = fx[n] - l;
        lin += l * l;
        res += e * e;
    }
    if (res < 1e-30) return 160.0;
    return std::min(160.0, 10.0 * std::log10(lin / res));
}

double compute_sdr_complex(const std::vector<double>& xre, const std::vector<double>& xim,
                           const std::vector<double>& fre, const std::vector<double>& fim) {
    const std::size_t N = xre.size();
    double sxx = 0.0, sr = 0.0, si = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        sxx += xre[n] * xre[n] + xim[n] * xim[n];
        sr += xre[n] * fre[n] + xim[n] * fim[n];
        si += xre[n] * fim[n] - xim[n] * fre[n];
    }
    if (sxx <= 0.0) throw std::invalid_argument("compute_sdr: zero input energy");
    const double ar = sr / sxx, ai = si / sxx;
    double lin = 0.0, res = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const double lr = ar * xre[n] - ai * xim[n];
        const double li = ar * xim[n] + ai * xre[n];
        const double er = fre[n] - lr, ei = fim[n] - li;
        lin += lr * lr + li * li;
        res += er * er + ei * ei;
    }
    if (res < 1e-30) return 160.0;
    return std::min(160.0, 10.0 * std::log10(lin / res));
}

NonlinearityDesc calibrate_sdr(NlKind kind, double target_sdr_db, Rng rng,
                               double tol_db, std::size_t ref_samples) {
    NonlinearityDesc desc;
    desc.kind = kind;
    if (kind == NlKind::Identity) {
        desc.achieved_sdr_db = 160.0;
        return desc;
    }

    std::vector<double> xr(ref_samples), xi;
    for (double& v : xr) v = rng.normal();
    if (kind == NlKind::ComplexSat) {
        xi.resize(ref_samples);
        const double s = 1.0 / std::sqrt(2.0);
        Rng r2 = rng.split("im");
        for (std::size_t n = 0; n < ref_samples; ++n) {
            xr[n] *= s;
            xi[n] = s * r2.normal();
        }
    }

    auto achieved = [&](double param) {
        NonlinearityDesc d = desc;
        if (kind == NlKind::Clip)
            d.x_max = param;
        else
            d.delta = param;
        if (kind == NlKind::ComplexSat) {
            std::vector<double> fr = xr, fi = xi;
            apply_nonlinearity_complex(fr, fi, d);
            return compute_sdr_complex(xr, xi, fr, fi);
        }
        return compute_sdr(xr, apply_nonlinearity(xr, d));
    };

    // SDR rises with x_max (less clipping) and falls with delta (deeper
    // saturation); bisect in log space accordingly.
    double lo = (kind == NlKind::Clip) ? 1e-3 : 1e-5;
    double hi = (kind == NlKind::Clip) ? 50.0 : 1e5;
    const bool increasing = (kind == NlKind::Clip);
    double sdr_lo = achieved(lo), sdr_hi = achieved(hi);
    const double smin = std::min(sdr_lo, sdr_hi), smax = std::max(sdr_lo, sdr_hi);
    if (target_sdr_db < smin || target_sdr_db > smax)
        throw std::runtime_error("calibrate_sdr: target " + std::to_string(target_sdr_db) +
                                 " dB outside achievable bracket [" + std::to_string(smin) +
                                 ", " + std::to_string(smax) + "]");
    double mid = lo, got = sdr_lo;
    for (int it = 0; it < 60; ++it) {
        mid = std::sqrt(lo * hi);
        got = achieved(mid);
        if (std::fabs(got - target_sdr_db) <= tol_db) break;
        if ((got < target_sdr_db) == increasing)
            lo = mid;
        else
            hi = mid;
    }
    if (std::fabs(got - target_sdr_db) > tol_db)
        throw std::runtime_error("calibrate_sdr: no convergence to " +
                                 std::to_string(target_sdr_db) + " dB after 60 steps");
    if (kind == NlKind::Clip)
        desc.x_max = mid;
    else
        desc.delta = mid;
    desc.achieved_sdr_db = got;
    return desc;
}

PlantSet make_dataset(const DatasetConfig& cfg, Rng rng) {
    if (cfg.K < 1) throw std::invalid_argument("make_dataset: K must be >= 1");
    PlantSet ps;
    ps.structure = cfg.structure;
    ps.K = cfg.K;
    ps.N = cfg.N;
    ps.h_invariant = cfg.h_invariant;
    ps.f_invariant = cfg.f_invariant;
    ps.complex_valued = cfg.complex_valued;

    const double tau = cfg.decay_tau > 0.0 ? cfg.decay_tau
                                           : static_cast<double>(cfg.L_h) / 8.0;

    // excitation (always plant-specific sequences)
    ps.x = gen_excitation(cfg.excitation, cfg.N, cfg.K, rng.split("exc"), cfg.ar_rho);
    if (cfg.complex_valued) {
        ps.x_im = gen_excitation(cfg.excitation, cfg.N, cfg.K, rng.split("exc_im"), cfg.ar_rho);
        const double s = 1.0 / std::sqrt(2.0);
        for (std::size_t k = 0; k < cfg.K; ++k)
            for (std::size_t n = 0; n < cfg.N; ++n) {
                ps.x[k][n] *= s;
                ps.x_im[k][n] *= s;
            }
    }

    // impulse responses
    for (std::size_t k = 0; k < cfg.K; ++k) {
        const std::size_t idx = cfg.h_invariant ? 0 : k;
        Rng hr = rng.split("h").split(idx);
        std::vector<double> hre = gen_impulse_response(cfg.L_h, tau, hr);
        if (cfg.complex_valued) {
            std::vector<double> him = gen_impulse_response(cfg.L_h, tau, hr.split("im"));
            double e = 0.0;
            for (std::size_t l = 0; l < cfg.L_h; ++l)
                e += hre[l] * hre[l] + him[l] * him[l];
            const double s = 1.0 / std::sqrt(e);
            for (std::size_t l = 0; l < cfg.L_h; ++l) {
                hre[l] *= s;
                him[l] *= s;
            }
            ps.h_im.push_back(std::move(him));
        }
        ps.h.push_back(std::move(hre));
    }

    // nonlinearities, SDR targets spread log-uniformly for var-f
    for (std::size_t k = 0; k < cfg.K; ++k) {
        const std::size_t idx = cfg.f_invariant ? 0 : k;
        NonlinearityDesc d;
        if (cfg.nl_family == NlKind::Identity) {
            d.kind = NlKind::Identity;
        } else {
            double target;
            if (cfg.f_invariant || cfg.K == 1) {
                target = std::sqrt(cfg.sdr_lo_db * cfg.sdr_hi_db);
            } else {
                const double u = static_cast<double>(idx) / static_cast<double>(cfg.K - 1);
                target = cfg.sdr_lo_db * std::pow(cfg.sdr_hi_db / cfg.sdr_lo_db, u);
            }
            d = calibrate_sdr(cfg.nl_family, target, rng.split("cal").split(idx));
            d.gamma = rng.split("gamma").split(idx).uniform(0.5, 2.0);
        }
        ps.f.push_back(d);
    }

    compute_outputs(ps, ps.y, ps.y_im);
    return ps;
}


void compute_outputs(const PlantSet& ps, std::vector<std::vector<double>>& y_out,
                     std::vector<std::vector<double>>& yim_out) {
    std::vector<std::vector<double>> y(ps.K), yim;
    if (ps.complex_valued) yim.assign(ps.K, {});
    for (std::size_t k = 0; k < ps.K; ++k) {
        if (!ps.complex_valued) {
            if (ps.structure == PlantStructure::Wiener)
                y[k] = apply_nonlinearity(apply_lti(ps.x[k], ps.h[k]), ps.f[k]);
            else
                y[k] = apply_lti(apply_nonlinearity(ps.x[k], ps.f[k]), ps.h[k]);
        } else {
            // complex convolution via four real ones
            auto conv_c = [&](const std::vector<double>& ar, const std::vector<double>& ai) {
                std::vector<double> rr = apply_lti(ar, ps.h[k]);
                std::vector<double> ri = apply_lti(ai, ps.h[k]);
                std::vector<double> ir = apply_lti(ar, ps.h_im[k]);
                std::vector<double> ii = apply_lti(ai, ps.h_im[k]);
                std::pair<std::vector<double>, std::vector<double>> out{rr, rr};
                for (std::size_t n = 0; n < rr.size(); ++n) {
                    out.first[n] = rr[n] - ii[n];
                    out.second[n] = ri[n] + ir[n];
                }
                return out;
            };
            if (ps.structure == PlantStructure::Wiener) {
                auto [dr, di] = conv_c(ps.x[k], ps.x_im[k]);
                apply_nonlinearity_complex(dr, di, ps.f[k]);
                y[k] = std::move(dr);
                yim[k] = std::move(di);
            } else {
                std::vector<double> fr = ps.x[k], fi = ps.x_im[k];
                apply_nonlinearity_complex(fr, fi, ps.f[k]);
                auto [dr, di] = conv_c(fr, fi);
                y[k] = std::move(dr);
                yim[k] = std::move(di);
            }
        }
    }
    y_out = std::move(y);
    yim_out = std::move(yim);
}

std::vector<std::vector<double>> regenerate_outputs(const PlantSet& ps) {
    std::vector<std::vector<double>> y, yim;
    compute_outputs(ps, y, yim);
    return y;
}

// ---------------------------------------------------------- persistence

namespace {

void write_raw(const std::string& path, const std::vector<double>& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cannot read " + path);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    is.seekg(0);
    std::vector<double> v(bytes / sizeof(double));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    return v;
}

json desc_to_json(const NonlinearityDesc& d) {
    const char* kinds[] = {"identity", "sigmoid", "clip", "complex_sat"};
    return json{{"kind", kinds[static_cast<int>(d.kind)]},
                {"gamma", d.gamma},
                {"delta", d.delta},
                {"x_max", d.x_max},
                {"achieved_sdr_db", d.achieved_sdr_db}};
}

NonlinearityDesc desc_from_json(const json& j) {
    NonlinearityDesc d;
    const std::string k = j.at("kind");
    d.kind = k == "identity"  ? NlKind::Identity
             : k == "sigmoid" ? NlKind::Sigmoid
             : k == "clip"    ? NlKind::Clip
                              : NlKind::ComplexSat;
    d.gamma = j.at("gamma");
    d.delta = j.at("delta");
    d.x_max = j.at("x_max");
    d.achieved_sdr_db = j.at("achieved_sdr_db");
    return d;
}

}  // namespace

std::uint64_t hash_doubles(const std::vector<double>& v) {
    std::uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

void save_dataset(const PlantSet& ps, const std::string& dir) {
    fs::create_directories(dir);
    json meta;
    meta["structure"] = ps.structure == PlantStructure::Wiener ? "wiener" : "hammerstein";
    meta["K"] = ps.K;
    meta["N"] = ps.N;
    meta["h_flag"] = ps.h_invariant ? "inv" : "var";
    meta["f_flag"] = ps.f_invariant ? "inv" : "var";
    meta["complex"] = ps.complex_valued;
    meta["near_end_signal"] = 0.0;  // verification setting: s[n] = 0
    json plants = json::array();
    for (std::size_t k = 0; k < ps.K; ++k) {
        json p;
        p["f"] = desc_to_json(ps.f[k]);
        p["h_hash"] = hash_doubles(ps.h[k]);
        p["x_hash"] = hash_doubles(ps.x[k]);
        p["y_hash"] = hash_doubles(ps.y[k]);
        plants.push_back(p);
        const std::string sk = std::to_string(k);
        write_raw(dir + "/x_" + sk + ".f64", ps.x[k]);
        write_raw(dir + "/y_" + sk + ".f64", ps.y[k]);
        write_raw(dir + "/h_" + sk + ".f64", ps.h[k]);
        if (ps.complex_valued) {
            write_raw(dir + "/x_im_" + sk + ".f64", ps.x_im[k]);
            write_raw(dir + "/y_im_" + sk + ".f64", ps.y_im[k]);
            write_raw(dir + "/h_im_" + sk + ".f64", ps.h_im[k]);
        }
    }
    meta["plants"] = plants;
    std::ofstream os(dir + "/metadata.json");
    os << meta.dump(2) << "\n";
    if (!os) throw std::runtime_error("cannot write metadata in " + dir);
}

PlantSet load_dataset(const std::string& dir) {
    std::ifstream is(dir + "/metadata.json");
    if (!is) throw std::runtime_error("no metadata.json in " + dir);
    json meta = json::parse(is);
    PlantSet ps;
    ps.structure = meta.at("structure") == "wiener" ? PlantStructure::Wiener
                                                    : PlantStructure::Hammerstein;
    ps.K = meta.at("K").get<std::size_t>();
    ps.N = meta.at("N").get<std::size_t>();
    ps.h_invariant = meta.at("h_flag") == "inv";
    ps.f_invariant = meta.at("f_flag") == "inv";
    ps.complex_valued = meta.at("complex").get<bool>();
    for (std::size_t k = 0; k < ps.K; ++k) {
        const std::string sk = std::to_string(k);
        ps.f.push_back(desc_from_json(meta.at("plants")[k].at("f")));
        ps.x.push_back(read_raw(dir + "/x_" + sk + ".f64"));
        ps.y.push_back(read_raw(dir + "/y_" + sk + ".f64"));
        ps.h.push_back(read_raw(dir + "/h_" + sk + ".f64"));
        if (ps.complex_valued) {
            ps.x_im.push_back(read_raw(dir + "/x_im_" + sk + ".f64"));
            ps.y_im.push_back(read_raw(dir + "/y_im_" + sk + ".f64"));
            ps.h_im.push_back(read_raw(dir + "/h_im_" + sk + ".f64"));
        }
    }
    return ps;
}

}  // namespace mkid

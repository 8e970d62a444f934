#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mkid/plants.hpp"

using namespace mkid;

namespace {

double lag1_autocorr(const std::vector<double>& x) {
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n + 1 < x.size(); ++n)
        num += (x[n] - mean) * (x[n + 1] - mean);
    for (double v : x) den += (v - mean) * (v - mean);
    return num / den;
}

// Independent SDR estimate: long-double moment accumulation, written
// separately from compute_sdr.
double sdr_reference(const std::vector<double>& x, const std::vector<double>& fx) {
    long double sxx = 0.0L, sxf = 0.0L;
    for (std::size_t n = 0; n < x.size(); ++n) {
        sxx += static_cast<long double>(x[n]) * x[n];
        sxf += static_cast<long double>(x[n]) * fx[n];
    }
    const long double alpha = sxf / sxx;
    long double sig = 0.0L, dist = 0.0L;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const long double lin = alpha * x[n];
        sig += lin * lin;
        const long double r = fx[n] - lin;
        dist += r * r;
    }
    return 10.0 * std::log10(static_cast<double>(sig / dist));
}

}  // namespace

TEST_CASE("white excitation has unit variance and reproducible streams") {
    auto a = gen_excitation(ExcitationKind::White, 32000, 2, Rng(3));
    double var = 0.0;
    for (double v : a[0]) var += v * v;
    var /= 32000.0;
    CHECK(var > 1.0 / 1.05);
    CHECK(var < 1.05);

    auto b = gen_excitation(ExcitationKind::White, 32000, 2, Rng(3));
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
    CHECK(a[0] != a[1]);  // per-plant substreams differ
}

TEST_CASE("colored excitation matches its AR(1) coefficient") {
    auto x = gen_excitation(ExcitationKind::ArColored, 32000, 1, Rng(5));
    CHECK(std::abs(lag1_autocorr(x[0]) - 0.9) < 0.02);

    auto strong = gen_excitation(ExcitationKind::ArColored, 64000, 1, Rng(5), 0.99);
    CHECK(std::abs(lag1_autocorr(strong[0]) - 0.99) < 0.01);

    CHECK_THROWS(gen_excitation(ExcitationKind::ArColored, 100, 1, Rng(1), 1.5));
}

TEST_CASE("impulse responses are unit energy with a decaying envelope") {
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        auto h = gen_impulse_response(64, 8.0, rng.split(i));
        double e = 0.0;
        for (double v : h) e += v * v;
        CHECK(std::abs(e - 1.0) < 1e-12);
        // the last tap is damped by e^-8 relative to the start, 10x safety
        CHECK(std::abs(h[63]) < 10.0 * std::exp(-8.0) * 10.0);
    }
    auto h1 = gen_impulse_response(16, 2.0, rng.split(201));
    auto h2 = gen_impulse_response(16, 2.0, rng.split(202));
    CHECK(h1 != h2);
}

TEST_CASE("causal convolution examples and loop oracle") {
    std::vector<double> x = {1, 2, 3, 4};

    SUBCASE("identity") {
        auto d = apply_lti(x, {1.0});
        CHECK(d == x);
    }
    SUBCASE("unit delay") {
        auto d = apply_lti(x, {0.0, 1.0});
        CHECK(d == std::vector<double>{0, 1, 2, 3});
    }
    SUBCASE("random kernel against a double loop") {
        Rng rng(9);
        std::vector<double> xs(200), h(16);
        for (auto& v : xs) v = rng.normal();
        for (auto& v : h) v = rng.normal();
        auto d = apply_lti(xs, h);
        REQUIRE(d.size() == xs.size());
        for (std::size_t n = 0; n < xs.size(); ++n) {
            double acc = 0.0;
            for (std::size_t l = 0; l < h.size() && l <= n; ++l) acc += h[l] * xs[n - l];
            CHECK(d[n] == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("memoryless nonlinearity evaluation") {
    SUBCASE("clip above the signal peak is the identity") {
        std::vector<double> x = {-0.5, 0.2, 0.9};
        NonlinearityDesc f;
        f.kind = NlKind::Clip;
        f.x_max = 1.9;
        CHECK(apply_nonlinearity(x, f) == x);
    }
    SUBCASE("sigmoid with tiny slope linearizes") {
        NonlinearityDesc f;
        f.kind = NlKind::Sigmoid;
        f.gamma = 1.0;
        f.delta = 1e-6;
        auto y = apply_nonlinearity({1.0}, f);
        CHECK(y[0] == doctest::Approx(std::atan(1e-6)).epsilon(1e-12));
    }
    SUBCASE("complex saturation preserves phase exactly") {
        NonlinearityDesc f;
        f.kind = NlKind::ComplexSat;
        f.gamma = 0.7;
        f.delta = 3.0;
        std::vector<double> re = {0.3, -1.2, 0.0}, im = {0.4, 0.5, -2.0};
        std::vector<double> r0 = re, i0 = im;
        apply_nonlinearity_complex(re, im, f);
        for (std::size_t n = 0; n < re.size(); ++n)
            CHECK(std::abs(std::atan2(im[n], re[n]) - std::atan2(i0[n], r0[n])) < 1e-12);
    }
    SUBCASE("kind/domain mismatch is rejected") {
        NonlinearityDesc f;
        f.kind = NlKind::ComplexSat;
        CHECK_THROWS(apply_nonlinearity({1.0}, f));
    }
}

TEST_CASE("distortion ratio of linear maps hits the cap") {
    Rng rng(11);
    std::vector<double> x(1000);
    for (auto& v : x) v = rng.normal();
    CHECK(compute_sdr(x, x) == doctest::Approx(160.0));
    std::vector<double> x2(x);
    for (auto& v : x2) v *= 2.0;
    CHECK(compute_sdr(x, x2) == doctest::Approx(160.0));
}

TEST_CASE("distortion ratio agrees with an independent Monte-Carlo estimate") {
    Rng rng(13);
    std::vector<double> x(1000000);
    for (auto& v : x) v = rng.normal();
    NonlinearityDesc f;
    f.kind = NlKind::Sigmoid;
    f.gamma = 1.0;
    f.delta = 2.0;
    auto fx = apply_nonlinearity(x, f);
    CHECK(std::abs(compute_sdr(x, fx) - sdr_reference(x, fx)) < 0.1);
}

TEST_CASE("nonlinearity calibration hits its target ratio") {
    SUBCASE("sigmoid at 4 dB") {
        auto f = calibrate_sdr(NlKind::Sigmoid, 4.0, Rng(17), 0.25, 200000);
        CHECK(std::abs(f.achieved_sdr_db - 4.0) <= 0.25);
    }
    SUBCASE("clip at 30 dB") {
        auto f = calibrate_sdr(NlKind::Clip, 30.0, Rng(17), 0.25, 200000);
        CHECK(std::abs(f.achieved_sdr_db - 30.0) <= 0.25);
    }
    SUBCASE("clip level is monotone in the ratio") {
        Rng rng(19);
        std::vector<double> x(100000);
        for (auto& v : x) v = rng.normal();
        double prev = -1e9;
        for (double xm : {0.3, 0.8, 1.5, 2.5}) {
            NonlinearityDesc f;
            f.kind = NlKind::Clip;
            f.x_max = xm;
            const double sdr = compute_sdr(x, apply_nonlinearity(x, f));
            CHECK(sdr > prev);
            prev = sdr;
        }
    }
}

TEST_CASE("datasets regenerate exactly from their stored components") {
    for (auto structure : {PlantStructure::Wiener, PlantStructure::Hammerstein}) {
        DatasetConfig dc;
        dc.structure = structure;
        dc.K = 3;
        dc.N = 2000;
        dc.L_h = 16;
        dc.nl_family = structure == PlantStructure::Wiener ? NlKind::Clip : NlKind::Sigmoid;
        PlantSet ps = make_dataset(dc, Rng(21).split("data"));
        auto y = regenerate_outputs(ps);
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t n = 0; n < 2000; ++n)
                CHECK(y[k][n] == doctest::Approx(ps.y[k][n]).epsilon(1e-12));
    }
}

TEST_CASE("identity nonlinearity reduces the plant to a pure LTI system") {
    DatasetConfig dc;
    dc.nl_family = NlKind::Identity;
    dc.K = 2;
    dc.N = 1000;
    dc.L_h = 8;
    PlantSet ps = make_dataset(dc, Rng(23).split("data"));
    for (std::size_t k = 0; k < 2; ++k) {
        auto d = apply_lti(ps.x[k], ps.h[k]);
        for (std::size_t n = 0; n < 1000; ++n)
            CHECK(ps.y[k][n] == doctest::Approx(d[n]).epsilon(1e-12));
    }
}

TEST_CASE("invariance flags pin components across plants") {
    DatasetConfig dc;
    dc.K = 3;
    dc.N = 500;
    dc.L_h = 8;
    dc.h_invariant = true;
    dc.f_invariant = true;
    PlantSet ps = make_dataset(dc, Rng(25).split("data"));
    for (std::size_t k = 1; k < 3; ++k) {
        CHECK(ps.h[k] == ps.h[0]);
        CHECK(ps.f[k].delta == ps.f[0].delta);
        CHECK(ps.f[k].gamma == ps.f[0].gamma);
    }

    dc.h_invariant = false;
    dc.f_invariant = false;
    PlantSet pv = make_dataset(dc, Rng(25).split("data"));
    CHECK(pv.h[0] != pv.h[1]);
    CHECK(pv.f[0].achieved_sdr_db != pv.f[1].achieved_sdr_db);
}

TEST_CASE("plant-order matters: Wiener and Hammerstein outputs differ") {
    DatasetConfig dc;
    dc.K = 1;
    dc.N = 800;
    dc.L_h = 8;
    dc.nl_family = NlKind::Sigmoid;
    dc.structure = PlantStructure::Wiener;
    PlantSet w = make_dataset(dc, Rng(27).split("data"));
    // swap the composition order by hand on the same components
    auto fx = apply_nonlinearity(w.x[0], w.f[0]);
    auto swapped = apply_lti(fx, w.h[0]);
    double diff = 0.0;
    for (std::size_t n = 0; n < 800; ++n) diff += std::abs(w.y[0][n] - swapped[n]);
    CHECK(diff > 1.0);
}

TEST_CASE("calibrated ratios stay inside the configured spread") {
    DatasetConfig dc;
    dc.K = 4;
    dc.N = 500;
    dc.L_h = 8;
    dc.sdr_lo_db = 4.0;
    dc.sdr_hi_db = 32.0;
    PlantSet ps = make_dataset(dc, Rng(29).split("data"));
    for (const auto& f : ps.f) {
        CHECK(f.achieved_sdr_db >= 4.0 - 0.3);
        CHECK(f.achieved_sdr_db <= 32.0 + 0.3);
    }
}

TEST_CASE("dataset directories round-trip bit-exactly") {
    DatasetConfig dc;
    dc.K = 2;
    dc.N = 400;
    dc.L_h = 8;
    dc.complex_valued = true;
    dc.nl_family = NlKind::ComplexSat;
    dc.structure = PlantStructure::Wiener;
    dc.sdr_lo_db = 8.0;  // magnitude saturation cannot reach very low SDR
    PlantSet ps = make_dataset(dc, Rng(31).split("data"));
    const std::string dir =
        (std::filesystem::temp_directory_path() / "mkid_test_ds").string();
    save_dataset(ps, dir);
    PlantSet r = load_dataset(dir);
    CHECK(r.structure == ps.structure);
    CHECK(r.K == ps.K);
    CHECK(r.complex_valued);
    CHECK(r.x == ps.x);
    CHECK(r.x_im == ps.x_im);
    CHECK(r.y == ps.y);
    CHECK(r.y_im == ps.y_im);
    CHECK(r.h == ps.h);
    std::filesystem::remove_all(dir);
}

TEST_CASE("content hashing is deterministic and order-sensitive") {
    std::vector<double> v = {1.0, 2.0, 3.5};
    CHECK(hash_doubles(v) == hash_doubles(v));
    std::vector<double> w = {2.0, 1.0, 3.5};
    CHECK(hash_doubles(v) != hash_doubles(w));
}

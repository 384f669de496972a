#include "doctest.h"

#include "bandloc/metrics.hpp"

#include <cmath>

using namespace bandloc;

namespace {

std::vector<cd> sample_truth() {
    return {cd(1.0, 0.0), cd(0.5, -0.5), cd(-0.3, 0.8), cd(0.0, 1.2)};
}

BandSpec grid_band(double center, double bw, int n_sc) {
    BandSpec b;
    b.band_index = 1;
    b.center_freq_hz = center;
    b.bandwidth_hz = bw;
    b.n_subcarriers = n_sc;
    return b;
}

} // namespace

TEST_CASE("ccne hand cases") {
    const auto truth = sample_truth();

    SUBCASE("pred = 2 * truth gives exactly 0 dB") {
        std::vector<cd> pred;
        for (const cd& v : truth) pred.push_back(2.0 * v);
        CHECK(ccne_db(pred, truth) == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("pred = truth gives -inf, floored to -200 in aggregates") {
        double v = ccne_db(truth, truth);
        CHECK(std::isinf(v));
        CHECK(v < 0);
        CHECK(ccne_floored(v) == kCcneFloorDb);
        CHECK(mean_ccne_db({v, v}) == doctest::Approx(kCcneFloorDb));
    }

    SUBCASE("error energy at 1% of truth energy gives -20 dB") {
        double truth_energy = 0.0;
        for (const cd& v : truth) truth_energy += std::norm(v);
        // put the entire error on one coefficient, magnitude sqrt(0.01 * E)
        std::vector<cd> pred = truth;
        pred[0] += cd(std::sqrt(0.01 * truth_energy), 0.0);
        CHECK(ccne_db(pred, truth) == doctest::Approx(-20.0).epsilon(1e-9));
    }

    SUBCASE("scale covariance: ccne(a*pred, a*truth) = ccne(pred, truth)") {
        std::vector<cd> pred = truth;
        pred[1] += cd(0.1, -0.2);
        const double base = ccne_db(pred, truth);
        for (cd a : {cd(3.0, 0.0), cd(0.0, -2.0), cd(1e-3, 1e-3)}) {
            std::vector<cd> ap, at;
            for (const cd& v : pred) ap.push_back(a * v);
            for (const cd& v : truth) at.push_back(a * v);
            CHECK(ccne_db(ap, at) == doctest::Approx(base).epsilon(1e-12));
        }
    }

    SUBCASE("zero-norm truth and shape mismatch are errors") {
        std::vector<cd> zeros(4, cd(0.0, 0.0));
        CHECK_THROWS_AS(ccne_db(truth, zeros), std::invalid_argument);
        std::vector<cd> shorter(truth.begin(), truth.end() - 1);
        CHECK_THROWS_AS(ccne_db(shorter, truth), std::invalid_argument);
    }
}

TEST_CASE("kl_divergence closed forms and positivity") {
    using Eigen::VectorXd;

    SUBCASE("standard normal posterior has zero KL") {
        VectorXd mu = VectorXd::Zero(5), lv = VectorXd::Zero(5);
        CHECK(kl_divergence(mu, lv) == 0.0);
    }

    SUBCASE("mu=1, logvar=0, one dim gives exactly 1/2") {
        VectorXd mu = VectorXd::Ones(1), lv = VectorXd::Zero(1);
        CHECK(kl_divergence(mu, lv) == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("KL > 0 whenever mu or logvar leaves zero") {
        VectorXd mu = VectorXd::Zero(3), lv = VectorXd::Zero(3);
        mu(1) = 1e-6;
        CHECK(kl_divergence(mu, lv) > 0.0);
        mu(1) = 0.0;
        lv(2) = -1e-6;
        CHECK(kl_divergence(mu, lv) > 0.0);
        lv(2) = 1e-6;
        CHECK(kl_divergence(mu, lv) > 0.0);
    }

    SUBCASE("random parameters always give non-negative KL") {
        Rng rng(11);
        for (int t = 0; t < 200; ++t) {
            VectorXd mu(4), lv(4);
            for (int d = 0; d < 4; ++d) {
                mu(d) = rng.normal(0.0, 2.0);
                lv(d) = rng.normal(0.0, 1.5);
            }
            CHECK(kl_divergence(mu, lv) >= 0.0);
        }
    }
}

TEST_CASE("kl_divergence matches a Monte-Carlo estimate within 1%") {
    using Eigen::VectorXd;
    VectorXd mu(3), lv(3);
    mu << 1.0, 2.0, -1.0;
    lv << 0.2, -0.3, 0.0;
    const double analytic = kl_divergence(mu, lv);

    // E_{z~q}[log q(z) - log p(z)] by direct sampling, q = N(mu, exp(lv)).
    Rng rng(20250814);
    const int n = 100000;
    double acc = 0.0;
    for (int t = 0; t < n; ++t) {
        for (int d = 0; d < 3; ++d) {
            double sigma = std::exp(0.5 * lv(d));
            double z = mu(d) + sigma * rng.normal();
            double log_q = -0.5 * lv(d) - (z - mu(d)) * (z - mu(d)) / (2.0 * sigma * sigma);
            double log_p = -0.5 * z * z;
            acc += log_q - log_p;
        }
    }
    const double mc = acc / n;
    CHECK(mc == doctest::Approx(analytic).epsilon(0.01));
}

TEST_CASE("elbo_components bookkeeping") {
    using Eigen::VectorXd;

    SUBCASE("perfect reconstruction, standard posterior: elbo = 0") {
        VectorXd x = VectorXd::Constant(4, 0.3);
        ElboComponents e =
            elbo_components(x, x, VectorXd::Zero(2), VectorXd::Zero(2));
        CHECK(e.recon == 0.0);
        CHECK(e.kl == 0.0);
        CHECK(e.elbo == 0.0);
    }

    SUBCASE("mu=1, logvar=0, 1-dim, pred=target: elbo = -0.5") {
        VectorXd x = VectorXd::Constant(4, 0.3);
        ElboComponents e =
            elbo_components(x, x, VectorXd::Ones(1), VectorXd::Zero(1));
        CHECK(e.elbo == doctest::Approx(-0.5).epsilon(1e-12));
    }

    SUBCASE("sign structure: recon <= 0, kl >= 0, elbo = recon - kl") {
        Rng rng(4);
        for (int t = 0; t < 50; ++t) {
            VectorXd pred(3), target(3), mu(2), lv(2);
            for (int i = 0; i < 3; ++i) {
                pred(i) = rng.normal();
                target(i) = rng.normal();
            }
            for (int i = 0; i < 2; ++i) {
                mu(i) = rng.normal();
                lv(i) = rng.normal();
            }
            ElboComponents e = elbo_components(pred, target, mu, lv);
            CHECK(e.recon <= 0.0);
            CHECK(e.kl >= 0.0);
            CHECK(e.elbo == e.recon - e.kl);
        }
    }
}

TEST_CASE("crlb_single formula oracle") {
    SUBCASE("frozen hand case: beta 20 MHz, SNR 1000") {
        CrlbInputs in;
        in.effective_bandwidth_hz = 2e7;
        in.snr_linear = 1e3;
        // c^2 / (8 pi^2 beta^2 SNR) evaluated independently
        CHECK(crlb_single(in) == doctest::Approx(0.002845716828571725).epsilon(1e-9));
    }

    SUBCASE("doubling beta divides the bound by four") {
        CrlbInputs in;
        in.effective_bandwidth_hz = 2e7;
        in.snr_linear = 1e3;
        const double base = crlb_single(in);
        in.effective_bandwidth_hz = 4e7;
        CHECK(crlb_single(in) == doctest::Approx(base / 4.0).epsilon(1e-12));
        CHECK(crlb_single(in) == doctest::Approx(0.0007114292071429314).epsilon(1e-9));
    }

    SUBCASE("strictly decreasing in beta and SNR on log-spaced sweeps") {
        CrlbInputs in;
        in.snr_linear = 100.0;
        double prev = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 40; ++i) {
            in.effective_bandwidth_hz = 1e5 * std::pow(10.0, i * 0.1);
            double v = crlb_single(in);
            CHECK(v < prev);
            prev = v;
        }
        in.effective_bandwidth_hz = 2e7;
        prev = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 40; ++i) {
            in.snr_linear = std::pow(10.0, i * 0.2);
            double v = crlb_single(in);
            CHECK(v < prev);
            prev = v;
        }
    }

    SUBCASE("non-positive inputs are rejected") {
        CrlbInputs in;
        in.effective_bandwidth_hz = 0.0;
        in.snr_linear = 10.0;
        CHECK_THROWS_AS(crlb_single(in), std::invalid_argument);
        in.effective_bandwidth_hz = 1e6;
        in.snr_linear = 0.0;
        CHECK_THROWS_AS(crlb_single(in), std::invalid_argument);
    }
}

TEST_CASE("crlb_spliced bounds and sweep") {
    const double beta = 2e7, snr = 1e3;
    CrlbInputs in;
    in.effective_bandwidth_hz = beta;
    in.snr_linear = snr;
    const double single = crlb_single(in);

    SUBCASE("weight 0 equals the single-band bound") {
        CHECK(crlb_spliced(beta, 0.0, snr) == doctest::Approx(single).epsilon(1e-12));
    }
    SUBCASE("weight 1 quarters the bound") {
        CHECK(crlb_spliced(beta, 1.0, snr) == doctest::Approx(single / 4.0).epsilon(1e-12));
    }
    SUBCASE("interior weights fall strictly between the extremes") {
        for (double w : {0.1, 0.25, 0.5, 0.75, 0.9}) {
            double v = crlb_spliced(beta, w, snr);
            CHECK(v < single);
            CHECK(v > single / 4.0);
        }
    }
    SUBCASE("101-point sweep never exceeds the single-band bound") {
        double prev = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 100; ++i) {
            double w = i / 100.0;
            double v = crlb_spliced(beta, w, snr);
            CHECK(v <= single);
            CHECK(v < prev); // monotone in the weight as well
            prev = v;
        }
    }
    SUBCASE("weights outside [0,1] are rejected") {
        CHECK_THROWS_AS(crlb_spliced(beta, -0.1, snr), std::invalid_argument);
        CHECK_THROWS_AS(crlb_spliced(beta, 1.1, snr), std::invalid_argument);
    }
}

TEST_CASE("effective_bandwidth_hz discrete-moment oracle") {
    SUBCASE("single subcarrier has zero spread") {
        CHECK(effective_bandwidth_hz(grid_band(5.765e9, 20e6, 1)) == 0.0);
    }

    SUBCASE("finite-N value matches direct summation") {
        const int n = 64;
        const double bw = 20e6, center = 5.765e9;
        const double spacing = bw / n;
        double mean = 0.0;
        for (int k = 0; k < n; ++k) mean += center + (k - n / 2) * spacing;
        mean /= n;
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            double f = center + (k - n / 2) * spacing;
            acc += (f - mean) * (f - mean);
        }
        const double oracle = std::sqrt(acc / n);
        CHECK(effective_bandwidth_hz(grid_band(center, bw, n)) ==
              doctest::Approx(oracle).epsilon(1e-12));
        CHECK(oracle == doctest::Approx(5772797.8755972395).epsilon(1e-12));
    }

    SUBCASE("approaches B/(2 sqrt 3) for a dense grid") {
        const double bw = 20e6;
        double v = effective_bandwidth_hz(grid_band(5.765e9, bw, 4096));
        CHECK(v == doctest::Approx(bw / (2.0 * std::sqrt(3.0))).epsilon(1e-4));
    }

    SUBCASE("homogeneity: scaling frequencies scales the output") {
        double base = effective_bandwidth_hz(grid_band(5.765e9, 20e6, 64));
        double scaled = effective_bandwidth_hz(grid_band(3.0 * 5.765e9, 3.0 * 20e6, 64));
        CHECK(scaled == doctest::Approx(3.0 * base).epsilon(1e-12));
    }
}

TEST_CASE("crlb_weight_from_ccne proxy") {
    CHECK(crlb_weight_from_ccne(-10.0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(crlb_weight_from_ccne(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(crlb_weight_from_ccne(10.0) == 1.0); // clamped
    CHECK(crlb_weight_from_ccne(-std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("MetricsReport::finalize recomputes aggregates from samples") {
    MetricsReport r;
    r.ccne_per_sample_db = {-10.0, -20.0, -std::numeric_limits<double>::infinity()};
    r.loc_sq_err_m2 = {1.0, 4.0, 0.25, 0.75};
    r.finalize();

    CHECK(r.ccne_mean_db == doctest::Approx((-10.0 - 20.0 + kCcneFloorDb) / 3.0));
    const double mse = (1.0 + 4.0 + 0.25 + 0.75) / 4.0;
    CHECK(r.loc_mse_m2 == doctest::Approx(mse).epsilon(1e-15));
    CHECK(r.loc_rmse_m == doctest::Approx(std::sqrt(mse)).epsilon(1e-15));
    CHECK(r.ccne_sample_count() == 3);
    CHECK(r.loc_sample_count() == 4);
}

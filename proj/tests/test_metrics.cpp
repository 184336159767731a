#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "mgan/metrics.hpp"
#include "mgan/rng.hpp"

using namespace mgan;

namespace {

ImageGrid random_grid(int n, Rng& rng) {
    ImageGrid g(n, n);
    for (double& v : g.values) v = rng.uniform();
    return g;
}

// Independent recomputation straight from the definitions.
double oracle_mae(const ImageGrid& a, const ImageGrid& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i)
        s += std::abs(255.0 * a.values[i] - 255.0 * b.values[i]);
    return s / double(a.values.size());
}

double oracle_mse(const ImageGrid& a, const ImageGrid& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = 255.0 * a.values[i] - 255.0 * b.values[i];
        s += d * d;
    }
    return s / double(a.values.size());
}

PetImage as_pet(const ImageGrid& g) {
    PetImage p(g.height, g.width);
    p.values = g.values;
    p.suv_scale = 8.0;
    return p;
}

PairedStudy make_study(const std::string& pid, int slice, const ImageGrid& pet) {
    PairedStudy s;
    s.patient_id = pid;
    s.slice_index = slice;
    s.label = LabelMap(pet.height, pet.width);
    s.ct = CtImage(pet.height, pet.width);
    s.pet = as_pet(pet);
    return s;
}

}  // namespace

TEST_CASE("mae and psnr match brute-force recomputation on random pairs") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        ImageGrid a = random_grid(16, rng);
        ImageGrid b = random_grid(16, rng);
        CHECK(mae(a, b) == doctest::Approx(oracle_mae(a, b)).epsilon(1e-9));
        const double mse = oracle_mse(a, b);
        CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / mse)).epsilon(1e-9));
    }
}

TEST_CASE("psnr of a uniform two-level difference hits the closed form") {
    // Per-pixel display difference of exactly 2 -> MSE 4 -> 42.11 dB.
    ImageGrid a(8, 8), b(8, 8);
    for (size_t i = 0; i < a.values.size(); ++i) {
        a.values[i] = 100.0 / 255.0;
        b.values[i] = 102.0 / 255.0;
    }
    CHECK(psnr(a, b) == doctest::Approx(42.11).epsilon(0.0003));
    CHECK(mae(a, b) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("identical images score zero error and infinite psnr") {
    Rng rng(32);
    ImageGrid a = random_grid(16, rng);
    CHECK(mae(a, a) == 0.0);
    CHECK(std::isinf(psnr(a, a)));
    CHECK(psnr(a, a) > 0.0);
}

TEST_CASE("both metrics are symmetric in their arguments") {
    Rng rng(33);
    ImageGrid a = random_grid(16, rng);
    ImageGrid b = random_grid(16, rng);
    CHECK(mae(a, b) == doctest::Approx(mae(b, a)).epsilon(1e-12));
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));
}

TEST_CASE("growing perturbations worsen both scores monotonically") {
    Rng rng(34);
    ImageGrid a = random_grid(16, rng);
    double prev_mae = 0.0;
    double prev_psnr = std::numeric_limits<double>::infinity();
    for (double eps : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        ImageGrid b = a;
        for (double& v : b.values) v = std::min(1.0, v + eps);
        const double m = mae(a, b);
        const double p = psnr(a, b);
        CHECK(m > prev_mae);
        CHECK(p < prev_psnr);
        prev_mae = m;
        prev_psnr = p;
    }
}

TEST_CASE("psnr ranks pairs exactly opposite to their mse") {
    Rng rng(35);
    std::vector<std::pair<double, double>> mse_psnr;
    for (int i = 0; i < 20; ++i) {
        ImageGrid a = random_grid(16, rng);
        ImageGrid b = random_grid(16, rng);
        mse_psnr.emplace_back(oracle_mse(a, b), psnr(a, b));
    }
    std::sort(mse_psnr.begin(), mse_psnr.end());
    for (size_t i = 1; i < mse_psnr.size(); ++i)
        CHECK(mse_psnr[i].second < mse_psnr[i - 1].second);
}

TEST_CASE("quality report pairs by key and averages its own rows") {
    Rng rng(36);
    Dataset synth, ref;
    for (int i = 0; i < 4; ++i) {
        ImageGrid s = random_grid(16, rng);
        ImageGrid r = random_grid(16, rng);
        synth.studies.push_back(make_study("p01", i, s));
        ref.studies.push_back(make_study("p01", i, r));
    }
    QualityReport rep = quality_report(synth, ref);
    REQUIRE(rep.rows.size() == 4);

    double mae_sum = 0.0, psnr_sum = 0.0;
    for (size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].mae ==
              doctest::Approx(mae(synth.studies[i].pet, ref.studies[i].pet)).epsilon(1e-12));
        mae_sum += rep.rows[i].mae;
        psnr_sum += rep.rows[i].psnr;
    }
    CHECK(rep.mean_mae == doctest::Approx(mae_sum / 4.0).epsilon(1e-12));
    CHECK(rep.mean_psnr == doctest::Approx(psnr_sum / 4.0).epsilon(1e-12));
    CHECK(rep.psnr_excluded == 0);
}

TEST_CASE("infinite-psnr rows are excluded from the mean and counted") {
    Rng rng(37);
    ImageGrid same = random_grid(16, rng);
    ImageGrid other = random_grid(16, rng);

    Dataset synth, ref;
    synth.studies.push_back(make_study("p01", 0, same));
    ref.studies.push_back(make_study("p01", 0, same));  // identical pair
    synth.studies.push_back(make_study("p01", 1, other));
    ref.studies.push_back(make_study("p01", 1, same));

    QualityReport rep = quality_report(synth, ref);
    CHECK(rep.psnr_excluded == 1);
    CHECK(std::isfinite(rep.mean_psnr));
    CHECK(rep.mean_psnr == doctest::Approx(psnr(other, same)).epsilon(1e-12));

    // All pairs identical: nothing left to average.
    Dataset synth2, ref2;
    synth2.studies.push_back(make_study("p01", 0, same));
    ref2.studies.push_back(make_study("p01", 0, same));
    QualityReport rep2 = quality_report(synth2, ref2);
    CHECK(rep2.psnr_excluded == 1);
    CHECK(std::isinf(rep2.mean_psnr));

    nlohmann::json j = rep2.to_json();
    CHECK(j["mean_psnr"] == "inf");
    CHECK(j["rows"][0]["psnr"] == "inf");
}

TEST_CASE("quality report rejects mismatched datasets precisely") {
    Rng rng(38);
    ImageGrid g = random_grid(16, rng);

    Dataset one, two;
    one.studies.push_back(make_study("p01", 0, g));
    two.studies.push_back(make_study("p01", 0, g));
    two.studies.push_back(make_study("p01", 1, g));
    CHECK_THROWS_AS(quality_report(one, two), InputError);

    Dataset wrong_key;
    wrong_key.studies.push_back(make_study("p02", 0, g));
    CHECK_THROWS_AS(quality_report(one, wrong_key), InputError);

    Dataset dup;
    dup.studies.push_back(make_study("p01", 0, g));
    dup.studies.push_back(make_study("p01", 0, g));
    Dataset ref2;
    ref2.studies.push_back(make_study("p01", 0, g));
    ref2.studies.push_back(make_study("p01", 1, g));
    CHECK_THROWS_AS(quality_report(dup, ref2), InputError);
}

#include "argmax_bayes/experiments.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cstring>

namespace ab = argmax_bayes;
using test_util::pt;

TEST_CASE("benchmark surface values") {
    CHECK(ab::f0_benchmark(0.5, 0.5) == 4.0);

    // direct scalar evaluation: (1 + e^-5)(cos(-4) + 1)
    const double expected = (1.0 + std::exp(-5.0)) * (std::cos(-4.0) + 1.0);
    CHECK(ab::f0_benchmark(0.0, 0.5) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.3487).epsilon(1e-3));

    SUBCASE("even in x about 1/2") {
        ab::Rng rng(2);
        for (int i = 0; i < 20; ++i) {
            double x = rng.uniform01(), y = rng.uniform01();
            CHECK(ab::f0_benchmark(x, y) == doctest::Approx(ab::f0_benchmark(1.0 - x, y)).epsilon(1e-12));
        }
    }

    SUBCASE("analytic partials match central differences") {
        ab::Rng rng(3);
        for (int i = 0; i < 20; ++i) {
            double x = 0.05 + 0.9 * rng.uniform01(), y = 0.05 + 0.9 * rng.uniform01();
            double dx = test_util::central_diff([&](double t) { return ab::f0_benchmark(t, y); }, x);
            double dy = test_util::central_diff([&](double t) { return ab::f0_benchmark(x, t); }, y);
            CHECK(ab::f0_benchmark_dx(x, y) == doctest::Approx(dx).epsilon(1e-5));
            CHECK(ab::f0_benchmark_dy(x, y) == doctest::Approx(dy).epsilon(1e-5));
        }
        // gradient vanishes at the mode
        CHECK(ab::f0_benchmark_dx(0.5, 0.5) == doctest::Approx(0.0));
        CHECK(ab::f0_benchmark_dy(0.5, 0.5) == doctest::Approx(0.0));
    }
}

TEST_CASE("data generation") {
    SUBCASE("30 x 30 grid with empirical CDF close to uniform") {
        ab::Rng rng(1);
        ab::Dataset data = ab::generate_grid_data(30, 0.1, rng,
                                                  [](const ab::Point& x) { return ab::f0_benchmark(x[0], x[1]); });
        REQUIRE(data.X.size() == 900);
        // Kolmogorov distance of the product lattice to Uniform([0,1]^2),
        // probed on a fine grid of corner candidates
        double sup = 0.0;
        for (int a = 0; a <= 60; ++a)
            for (int b = 0; b <= 60; ++b) {
                double u = a / 60.0, v = b / 60.0;
                long count = 0;
                for (const auto& x : data.X) count += (x[0] <= u && x[1] <= v);
                sup = std::max(sup, std::abs(count / 900.0 - u * v));
            }
        CHECK(sup < 2.0 / 30.0);
    }

    SUBCASE("zero noise returns the surface exactly") {
        ab::Rng rng(2);
        ab::Dataset data = ab::generate_grid_data(10, 0.0, rng,
                                                  [](const ab::Point& x) { return ab::f0_benchmark(x[0], x[1]); });
        for (std::size_t i = 0; i < data.X.size(); ++i)
            CHECK(data.Y[static_cast<long>(i)] == ab::f0_benchmark(data.X[i][0], data.X[i][1]));
    }

    SUBCASE("seed determinism") {
        ab::Rng a(3), b(3);
        auto f = [](const ab::Point& x) { return ab::f0_benchmark(x[0], x[1]); };
        ab::Dataset da = ab::generate_grid_data(8, 0.1, a, f);
        ab::Dataset db = ab::generate_grid_data(8, 0.1, b, f);
        CHECK(std::memcmp(da.Y.data(), db.Y.data(), sizeof(double) * da.Y.size()) == 0);
    }

    SUBCASE("iid design stays inside the cube") {
        ab::Rng design(4), noise(5);
        ab::Dataset data = ab::generate_iid_data(200, 0.1, design, noise,
                                                 [](const ab::Point& x) { return x[0]; });
        for (const auto& x : data.X) {
            CHECK(x[0] >= 0.0);
            CHECK(x[0] < 1.0);
            CHECK(x[1] >= 0.0);
            CHECK(x[1] < 1.0);
        }
    }
}

TEST_CASE("budget accounting") {
    ab::ExperimentSpec spec;
    CHECK(spec.total_budget() == 1764);
    CHECK(spec.grid_per_axis(1764) == 42);
    CHECK(spec.grid_per_axis(900) == 30);
    CHECK_THROWS_AS(spec.grid_per_axis(1000), std::invalid_argument);
}

TEST_CASE("paired stage-1 noise across two-stage methods") {
    // both two-stage methods consume the identical stage-1 dataset
    ab::ExperimentSpec spec;
    ab::Rng a = ab::Rng::substream(spec.master_seed, ab::stream::id(3, ab::stream::stage1_noise));
    ab::Rng b = ab::Rng::substream(spec.master_seed, ab::stream::id(3, ab::stream::stage1_noise));
    auto f = [](const ab::Point& x) { return ab::f0_benchmark(x[0], x[1]); };
    ab::Dataset da = ab::generate_grid_data(30, spec.sigma0, a, f);
    ab::Dataset db = ab::generate_grid_data(30, spec.sigma0, b, f);
    CHECK(std::memcmp(da.Y.data(), db.Y.data(), sizeof(double) * da.Y.size()) == 0);
}

TEST_CASE("noiseless runs recover the mode to resolution accuracy") {
    ab::ExperimentSpec spec;
    spec.sigma0 = 0.0;
    spec.fix_j = {7, 9};

    SUBCASE("single stage within one grid cell") {
        ab::RunRecord rec = ab::run_single_bayes(spec, 0);
        const double cell = 1.0 / 41.0;
        CHECK(rec.err_mu <= std::sqrt(2.0) * cell + 1e-12);
    }

    SUBCASE("two-stage methods reach millimeter accuracy") {
        ab::RunRecord bayes = ab::run_two_stage_bayes(spec, 0);
        CHECK(bayes.err_mu < 1e-3);
        ab::RunRecord freq = ab::run_two_stage_freq(spec, 0);
        CHECK(freq.err_mu < 1e-3);
    }
}

TEST_CASE("single-stage pipeline at the benchmark settings") {
    ab::ExperimentSpec spec;
    ab::RunRecord rec = ab::run_single_bayes(spec, 0);
    CHECK(std::abs(rec.j_chosen[0] - 9) <= 1);
    CHECK(std::abs(rec.j_chosen[1] - 9) <= 1);
    CHECK(rec.err_mu >= 0.005);
    CHECK(rec.err_mu <= 0.05);
}

TEST_CASE("two-stage pipeline at the benchmark settings") {
    ab::ExperimentSpec spec;
    ab::TwoStageArtifacts art;
    ab::RunRecord rec = ab::run_two_stage_bayes(spec, 0, &art);
    CHECK(std::abs(rec.j_chosen[0] - 7) <= 1);
    CHECK(std::abs(rec.j_chosen[1] - 9) <= 1);
    // sampling-box half-extent inside the expected 0.056..0.167 band
    for (int k = 0; k < 2; ++k) {
        CHECK(rec.delta_used[k] >= 0.5 * 0.1111);
        CHECK(rec.delta_used[k] <= 1.5 * 0.1111);
    }
    CHECK(rec.err_mu < 0.02);
    long ok = 0;
    for (const auto& s : art.stage2_samples.solves) ok += s.hessian_ok;
    CHECK(ok > 0.95 * static_cast<double>(art.stage2_samples.solves.size()));
    // second-stage variance estimate close to the true sigma0^2
    CHECK(std::abs(rec.sigma2_hat - 0.01) < 0.005);
}

TEST_CASE("frequentist baseline at the benchmark settings") {
    ab::ExperimentSpec spec;
    ab::RunRecord rec = ab::run_two_stage_freq(spec, 0);
    CHECK(rec.delta_used[0] == doctest::Approx(0.06));
    CHECK(rec.delta_used[1] == doctest::Approx(0.06));
    CHECK(rec.err_mu < 0.02);
    CHECK_FALSE(rec.flagged);
}

TEST_CASE("monte carlo summaries") {
    ab::ExperimentSpec spec;
    spec.replications = 2;
    spec.fix_j = {7, 9};
    spec.mu_samples = 200;
    spec.stage2_draws = 200;

    SUBCASE("single replication yields one row per method") {
        ab::ExperimentSpec one = spec;
        one.replications = 1;
        ab::MonteCarloResult r = ab::monte_carlo(one, {ab::Method::TwoStageBayes});
        CHECK(r.runs.size() == 1);
        CHECK(r.summaries.size() == 1);
        CHECK(r.summaries[0].err_mu.median == r.runs[0].err_mu);
    }

    SUBCASE("reruns are identical and order independent") {
        ab::MonteCarloResult a = ab::monte_carlo(spec, {ab::Method::TwoStageBayes, ab::Method::TwoStageFreq});
        ab::MonteCarloResult b = ab::monte_carlo(spec, {ab::Method::TwoStageFreq, ab::Method::TwoStageBayes});
        // pick out the bayes summaries from both orders
        const ab::MethodSummary& sa = a.summaries[0];
        const ab::MethodSummary& sb = b.summaries[1];
        CHECK(sa.err_mu.median == sb.err_mu.median);
        CHECK(sa.err_M.mean == sb.err_M.mean);
    }
}

TEST_CASE("summary statistics") {
    ab::SummaryStats s = ab::summarize({3.0, 1.0, 2.0, 4.0});
    CHECK(s.min == 1.0);
    CHECK(s.max == 4.0);
    CHECK(s.median == doctest::Approx(2.5));
    CHECK(s.q1 == doctest::Approx(1.75));
    CHECK(s.q3 == doctest::Approx(3.25));
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK_THROWS_AS(ab::summarize({}), std::invalid_argument);
}

TEST_CASE("midpoint lattice option") {
    ab::Rng rng(9);
    ab::Dataset data = ab::generate_grid_data(4, 0.0, rng,
                                              [](const ab::Point& x) { return x[0]; }, true);
    CHECK(data.X[0][0] == doctest::Approx(0.125));
    CHECK(data.X.back()[1] == doctest::Approx(0.875));
}

TEST_CASE("combined variance estimate concentrates near sigma0^2") {
    // |sigma_star^2 - sigma0^2| < 0.005 in at least 90% of replications
    ab::ExperimentSpec spec;
    spec.fix_j = {7, 9};
    spec.mu_samples = 400;
    spec.stage2_draws = 50;
    long hits = 0;
    const long reps = 20;
    for (long rep = 0; rep < reps; ++rep) {
        ab::RunRecord rec = ab::run_two_stage_bayes(spec, rep);
        if (std::abs(rec.sigma2_hat - 0.01) < 0.005) ++hits;
    }
    CHECK(hits >= 18);
}

TEST_CASE("iid design runs end to end") {
    ab::ExperimentSpec spec;
    spec.design = ab::ExperimentSpec::Design::IidUniform;
    spec.fix_j = {7, 9};
    spec.mu_samples = 300;
    spec.stage2_draws = 200;
    ab::RunRecord single = ab::run_single_bayes(spec, 0);
    CHECK(single.err_mu < 0.1);
    ab::RunRecord two = ab::run_two_stage_bayes(spec, 0);
    CHECK(two.err_mu < 0.05);
}

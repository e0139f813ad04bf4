#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gspam/recovery.hpp"
#include "oracles.hpp"

using namespace gspam;

namespace {

GroundTruthModel pure_spam(int d) {
    GroundTruthModel m;
    m.d = d;
    m.s1 = {1, 2};
    m.univariates[1] = ComponentFunction::univariate([](double x) { return 2 * x; }, {2.2, 2, 0, 0});
    m.univariates[2] =
        ComponentFunction::univariate([](double x) { return -3 * x * x; }, {3.63, 6.6, 6, 0});
    return m;
}

GroundTruthModel pure_interactions(int d) {
    GroundTruthModel m;
    m.d = d;
    m.s2 = {{3, 4}, {4, 5}};
    m.bivariates[{3, 4}] =
        ComponentFunction::bivariate([](double x, double y) { return 4 * x * y; }, {4.84, 4.4, 4, 0});
    m.bivariates[{4, 5}] =
        ComponentFunction::bivariate([](double x, double y) { return -5 * x * y; }, {6.05, 5.5, 5, 0});
    return m;
}

}  // namespace

TEST_CASE("parameter derivation reproduces the frozen reference quantities", "[recovery]") {
    auto bench = make_benchmark("f1", 500);
    RecoveryConstants consts;  // c_tilde = 5.6
    auto p = derive_params_noiseless(bench.params, 500, consts);

    CHECK(p.pair_grid_res == 1);   // ceil(1 / lambda2) with lambda2 = 1
    CHECK(p.diag_grid_res == 4);   // ceil(1 / 0.3)
    CHECK(p.n_grad_meas == 129);   // ceil(5.6 * 5 * ln 100)
    CHECK(p.n_hess_meas == 62);
    CHECK(p.hess_taylor_coeff == Catch::Approx(3.4290).epsilon(1e-3));
    CHECK(p.grad_budget == 5);
    CHECK(p.row_budget == 3);

    // thresholds respect the detection margins
    CHECK(p.pair_threshold < bench.params.d2 / 2);
    CHECK(p.grad_step > 0);
    CHECK(p.hess_step > p.hess_step_lo);
    CHECK(p.hess_step < p.hess_step_hi);

    derive_uni_stage(p, bench.params, 500, 3);
    CHECK(p.uni_budget == 2);
    CHECK(p.uni_threshold < bench.params.d1 / 2);
    // probe budget keeps every query inside the enlarged box
    CHECK(p.uni_step / std::sqrt(static_cast<double>(p.n_uni_meas)) <= 0.1 + 1e-12);

    auto f2 = make_benchmark("f2", 500);
    auto p2 = derive_params_noiseless(f2.params, 500, consts);
    CHECK(p2.pair_grid_res == 4);
    CHECK(p2.diag_grid_res == 4);
}

TEST_CASE("bounded-noise windows collapse to the noiseless ones at eps = 0", "[recovery]") {
    auto bench = make_benchmark("f1", 200);
    auto p0 = derive_params_noiseless(bench.params, 200);
    auto pb = derive_params_bounded(bench.params, 200, 0.0);
    CHECK(pb.pair_cubic_angle == Catch::Approx(M_PI / 2));
    CHECK(pb.grad_step_hi == Catch::Approx(p0.grad_step_hi).epsilon(1e-12));
    CHECK(pb.grad_step_lo == Catch::Approx(0.0).margin(1e-12));
    // the threshold formula itself reduces: evaluate both at the same steps
    double mu = p0.grad_step, mu1 = p0.hess_step;
    double t_noiseless = p0.constants.c2 * (p0.hess_taylor_coeff * mu1 + p0.grad_error_coeff * mu * mu / mu1);
    double t_bounded = pb.constants.c2 * (pb.hess_taylor_coeff * mu1 + pb.grad_error_coeff * mu * mu / mu1 +
                                          pb.pair_noise_coeff * 0.0 / (mu * mu1));
    CHECK(t_bounded == Catch::Approx(t_noiseless).epsilon(1e-14));
}

TEST_CASE("noise near the ceiling shrinks the admissible window to nothing", "[recovery]") {
    auto bench = make_benchmark("f1", 200);
    auto probe = derive_params_bounded(bench.params, 200, 0.0);
    double eps1 = probe.noise_ceiling_pairs;
    auto tight = derive_params_bounded(bench.params, 200, 0.999 * eps1);
    CHECK(tight.pair_cubic_angle == Catch::Approx(std::acos(-0.999)).epsilon(1e-12));
    double tight_width = tight.grad_step_hi - tight.grad_step_lo;
    auto loose = derive_params_bounded(bench.params, 200, 0.1 * eps1);
    CHECK(tight_width < 0.1 * (loose.grad_step_hi - loose.grad_step_lo));
    CHECK_THROWS_AS(derive_params_bounded(bench.params, 200, eps1), InfeasibleError);
}

TEST_CASE("admissible bounded noise keeps thresholds under the detection margins", "[recovery]") {
    auto bench = make_benchmark("f1", 300);
    auto probe = derive_params_bounded(bench.params, 300, 0.0);
    std::mt19937_64 eng(5);
    std::uniform_real_distribution<double> u(0.01, 0.95);
    for (int t = 0; t < 10; ++t) {
        double eps = u(eng) * probe.noise_ceiling_pairs;
        auto p = derive_params_bounded(bench.params, 300, eps);
        CHECK(p.pair_threshold < bench.params.d2 / 2);
        derive_uni_stage(p, bench.params, 300, 3, std::min(eps, 0.9 * p.noise_ceiling_uni));
        CHECK(p.uni_threshold < bench.params.d1 / 2);
    }
}

TEST_CASE("resampling counts follow the union-bound formula", "[recovery]") {
    // frozen from direct evaluation of the formula
    auto [n1, n2] = derive_resampling(0.01, 0.005, 0.005, 0.01, 0.01, 129, 62, 62, 1, 4, 11);
    CHECK(n1 == 77);
    CHECK(n2 >= 1);

    auto [z1, z2] = derive_resampling(0.0, 0.005, 0.005, 0.01, 0.01, 129, 62, 62, 1, 4, 11);
    CHECK(z1 == 1);
    CHECK(z2 == 1);

    auto [a1, a2] = derive_resampling(0.02, 0.005, 0.005, 0.01, 0.01, 129, 62, 62, 1, 4, 11);
    double ratio = static_cast<double>(a1) / n1;
    CHECK(ratio > 3.6);
    CHECK(ratio < 4.4);
    (void)a2;
}

TEST_CASE("interaction stage recovers the f1 pairs exactly", "[recovery]") {
    auto bench = make_benchmark("f1", 100);
    QueryOracle oracle(bench.model, NoiseSpec::none(), 3);
    RecoverySettings settings;
    settings.seed = 4;
    auto params = derive_params_noiseless(bench.params, 100);
    auto family = build_hash_family(100, default_family_size(100), 9);
    auto V = draw_ensemble(params.n_grad_meas, 100, 10);
    auto Vp = draw_ensemble(params.n_hess_meas, 100, 11);
    auto est = estimate_interactions(oracle, family, params, V, Vp, settings);
    CHECK(est.s2 == bench.model.s2);
    // every detected pair carries a witness above the threshold
    for (const auto& [pr, w] : est.pair_witnesses) CHECK(w.statistic > params.pair_threshold);
}

TEST_CASE("a pure additive model yields no interaction pairs", "[recovery]") {
    auto model = pure_spam(60);
    ProblemParams prob{2.0, 3.0, 0.3, 1.0, 6.0, 2, 1};
    QueryOracle oracle(model, NoiseSpec::none(), 5);
    RecoverySettings settings;
    settings.seed = 6;
    auto params = derive_params_noiseless(prob, 60);
    auto family = build_hash_family(60, default_family_size(60), 7);
    auto V = draw_ensemble(params.n_grad_meas, 60, 8);
    auto Vp = draw_ensemble(params.n_hess_meas, 60, 9);
    auto est = estimate_interactions(oracle, family, params, V, Vp, settings);
    CHECK(est.s2.empty());
}

TEST_CASE("full recovery on f1 is exact with the predicted query count", "[recovery]") {
    auto bench = make_benchmark("f1", 100);
    QueryOracle oracle(bench.model, NoiseSpec::none(), 21);
    RecoverySettings settings;
    settings.seed = 22;
    auto est = recover_supports(oracle, bench.params, settings);
    CHECK(est.s1 == bench.model.s1);
    CHECK(est.s2 == bench.model.s2);
    CHECK(est.s1.count(3) == 0);  // stage one variables never reappear in stage two

    const auto& p = est.params;
    std::uint64_t expected =
        static_cast<std::uint64_t>(p.chi_size) * 2 * p.n_grad_meas * (p.n_hess_meas + 1) *
            p.pair_resamples +
        static_cast<std::uint64_t>(2 * p.diag_grid_res + 1) * 2 * p.n_uni_meas * p.uni_resamples;
    CHECK(est.total_queries == expected);
    CHECK(est.total_queries == oracle.query_count());

    // noiseless determinism: identical reruns give identical results
    QueryOracle oracle2(bench.model, NoiseSpec::none(), 21);
    auto est2 = recover_supports(oracle2, bench.params, settings);
    CHECK(est2.s1 == est.s1);
    CHECK(est2.s2 == est.s2);
    CHECK(est2.total_queries == est.total_queries);
}

TEST_CASE("pure-interaction models skip the univariate stage", "[recovery]") {
    auto model = pure_interactions(80);
    ProblemParams prob{2.0, 3.0, 0.3, 1.0, 6.0, 3, 2};
    QueryOracle oracle(model, NoiseSpec::none(), 31);
    RecoverySettings settings;
    settings.seed = 32;
    auto est = recover_supports(oracle, prob, settings);
    CHECK(est.s2 == model.s2);
    CHECK(est.s1.empty());
    CHECK_FALSE(est.params.uni_stage_ready);
}

TEST_CASE("f3 with one block recovers exactly", "[recovery]") {
    auto bench = make_benchmark("f3", 120, 1);
    QueryOracle oracle(bench.model, NoiseSpec::none(), 41);
    RecoverySettings settings;
    settings.seed = 42;
    auto est = recover_supports(oracle, bench.params, settings);
    CHECK(est.s1 == bench.model.s1);
    CHECK(est.s2 == bench.model.s2);
}

TEST_CASE("bounded adversarial noise below the ceilings still recovers exactly", "[recovery]") {
    auto bench = make_benchmark("f1", 100);
    auto probe = derive_params_bounded(bench.params, 100, 0.0);
    RecoveryParams uni_probe = probe;
    derive_uni_stage(uni_probe, bench.params, 100, 3);
    double eps = 0.5 * std::min(probe.noise_ceiling_pairs, uni_probe.noise_ceiling_uni);

    QueryOracle oracle(bench.model, NoiseSpec::adversarial(eps), 51);
    RecoverySettings settings;
    settings.seed = 52;
    auto est = recover_supports(oracle, bench.params, settings);
    CHECK(est.s1 == bench.model.s1);
    CHECK(est.s2 == bench.model.s2);
}

TEST_CASE("gaussian noise with tabulated resampling recovers with high rate", "[recovery]") {
    auto bench = make_benchmark("f1", 100);
    int successes = 0;
    for (int trial = 0; trial < 5; ++trial) {
        QueryOracle oracle(bench.model, NoiseSpec::gaussian(1e-4), 60 + trial);
        RecoverySettings settings;
        settings.seed = 70 + trial;
        settings.resamples = {{50, 20}};
        auto est = recover_supports(oracle, bench.params, settings);
        successes += (est.s1 == bench.model.s1 && est.s2 == bench.model.s2);
        CHECK(est.params.pair_resamples == 50);
        CHECK(est.params.uni_resamples == 20);
    }
    CHECK(successes >= 4);
}

TEST_CASE("noisy runs are reproducible under different thread counts", "[recovery]") {
    auto bench = make_benchmark("f1", 60);
    auto run = [&](unsigned threads) {
        QueryOracle oracle(bench.model, NoiseSpec::gaussian(1e-4), 81);
        RecoverySettings settings;
        settings.seed = 82;
        settings.resamples = {{20, 10}};
        settings.threads = threads;
        return recover_supports(oracle, bench.params, settings);
    };
    auto a = run(1), b = run(4);
    CHECK(a.s1 == b.s1);
    CHECK(a.s2 == b.s2);
    CHECK(a.total_queries == b.total_queries);
}

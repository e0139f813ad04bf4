#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gspam/parallel.hpp"
#include "gspam/quadrature.hpp"
#include "gspam/rng.hpp"

using namespace gspam;

TEST_CASE("gauss-legendre integrates polynomials and smooth functions", "[quadrature]") {
    // degree-2n-1 exactness
    const auto& q8 = gauss_legendre(8);
    double s = 0;
    for (int i = 0; i < 8; ++i) s += q8.weights[i];
    CHECK(s == Catch::Approx(2.0).epsilon(1e-14));

    CHECK(expect_uniform([](double x) { return x * x; }, 16) == Catch::Approx(1.0 / 3).epsilon(1e-13));
    CHECK(expect_uniform([](double x) { return x * x * x; }, 16) == Catch::Approx(0.0).margin(1e-15));
    // E[e^x] over uniform[-1,1] = sinh(1)
    CHECK(expect_uniform([](double x) { return std::exp(x); }, 32) ==
          Catch::Approx(std::sinh(1.0)).epsilon(1e-13));
    CHECK(expect_uniform2([](double x, double y) { return x * x * y * y; }, 32) ==
          Catch::Approx(1.0 / 9).epsilon(1e-12));
}

TEST_CASE("child seeds are deterministic and distinct", "[quadrature]") {
    CHECK(rng::child_seed(7, 3) == rng::child_seed(7, 3));
    CHECK(rng::child_seed(7, 3) != rng::child_seed(7, 4));
    CHECK(rng::child_seed(7, 3) != rng::child_seed(8, 3));
}

TEST_CASE("parallel_for covers the range and propagates errors", "[quadrature]") {
    std::vector<int> hits(257, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, 4);
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS(parallel_for(8, [](std::size_t i) {
        if (i == 5) throw std::runtime_error("boom");
    }));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sdelab/brownian.hpp"
#include "sdelab/linalg.hpp"

using namespace sdelab;

TEST_CASE("regeneration reproduces the lattice bit for bit") {
    const BrownianLattice a = generate_lattice(2, 10, 42, 7);
    const BrownianLattice b = generate_lattice(2, 10, 42, 7);
    REQUIRE(a.increments.size() == b.increments.size());
    CHECK(std::memcmp(a.increments.data(), b.increments.data(),
                      a.increments.size() * sizeof(double)) == 0);

    const BrownianLattice c = generate_lattice(2, 10, 42, 8);
    CHECK(std::memcmp(a.increments.data(), c.increments.data(),
                      a.increments.size() * sizeof(double)) != 0);
}

TEST_CASE("level guard rejects absurd resolutions") {
    CHECK_THROWS_AS(generate_lattice(1, 0, 1, 0), ResourceGuardError);
    CHECK_THROWS_AS(generate_lattice(1, 25, 1, 0), ResourceGuardError);
    CHECK_THROWS_AS(generate_lattice(0, 10, 1, 0), InvalidParameterError);
}

TEST_CASE("increment sample variance matches 2^-L within 1%") {
    const BrownianLattice lat = generate_lattice(1, 20, 2026, 0);  // 2^20 draws
    double sum = 0.0, sum2 = 0.0;
    for (double v : lat.increments) {
        sum += v;
        sum2 += v * v;
    }
    const double n = static_cast<double>(lat.increments.size());
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(var == doctest::Approx(std::ldexp(1.0, -20)).epsilon(0.01));
}

TEST_CASE("coarse increments: edge levels and refinement consistency") {
    const BrownianLattice lat = generate_lattice(2, 9, 11, 3);

    // level = level_ref returns the fine increments themselves
    const auto fine = coarse_increments(lat, 9);
    CHECK(fine == lat.increments);

    // level 0 is the endpoint W_1
    const auto w = prefix_path(lat);
    const auto total = coarse_increments(lat, 0);
    REQUIRE(total.size() == 2);
    CHECK(total[0] == doctest::Approx(w[w.size() - 2]).epsilon(1e-12));
    CHECK(total[1] == doctest::Approx(w[w.size() - 1]).epsilon(1e-12));

    // step 0 at level 3 is the sum of the first 2^(9-3) fine increments
    const auto lvl3 = coarse_increments(lat, 3);
    {
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t i = 0; i < (1u << 6); ++i) {
            s0 += lat.increment(i)[0];
            s1 += lat.increment(i)[1];
        }
        CHECK(lvl3[0] == doctest::Approx(s0).epsilon(1e-13));
        CHECK(lvl3[1] == doctest::Approx(s1).epsilon(1e-13));
    }

    // pairwise sums reproduce the next-coarser level bitwise
    for (int level = 9; level > 0; --level) {
        const auto fine_lvl = coarse_increments(lat, level);
        const auto coarse_lvl = coarse_increments(lat, level - 1);
        for (std::size_t k = 0; k < coarse_lvl.size() / 2; ++k)
            for (int c = 0; c < 2; ++c)
                CHECK(coarse_lvl[k * 2 + c] ==
                      fine_lvl[(2 * k) * 2 + c] + fine_lvl[(2 * k + 1) * 2 + c]);
    }

    // telescoping: every level sums to W_1
    for (int level : {0, 2, 5, 9}) {
        const auto inc = coarse_increments(lat, level);
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t k = 0; k < inc.size() / 2; ++k) {
            s0 += inc[k * 2];
            s1 += inc[k * 2 + 1];
        }
        CHECK(s0 == doctest::Approx(w[w.size() - 2]).epsilon(1e-12));
        CHECK(s1 == doctest::Approx(w[w.size() - 1]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(coarse_increments(lat, 10), InvalidLevelError);
}

TEST_CASE("empirical covariance of coarse increments is 2^-l I within 2%") {
    const int level = 3;
    const int d1 = 2;
    double sum00 = 0.0, sum11 = 0.0, sum01 = 0.0;
    std::size_t count = 0;
    for (std::uint64_t path = 0; path < 16000; ++path) {  // 16000 * 8 = 1.28e5 samples
        const BrownianLattice lat = generate_lattice(d1, 7, 99, path);
        const auto inc = coarse_increments(lat, level);
        for (std::size_t k = 0; k < (1u << level); ++k) {
            sum00 += inc[k * d1] * inc[k * d1];
            sum11 += inc[k * d1 + 1] * inc[k * d1 + 1];
            sum01 += inc[k * d1] * inc[k * d1 + 1];
            ++count;
        }
    }
    const double expect = std::ldexp(1.0, -level);
    CHECK(sum00 / count == doctest::Approx(expect).epsilon(0.02));
    CHECK(sum11 / count == doctest::Approx(expect).epsilon(0.02));
    CHECK(std::fabs(sum01 / count) < 0.02 * expect);
}

TEST_CASE("iterated integrals: left-sum identity for scalar noise") {
    const BrownianLattice lat = generate_lattice(1, 10, 5, 2);
    const int level = 4;
    const auto J = iterated_integrals(lat, level);
    const auto coarse = coarse_increments(lat, level);
    const std::size_t m = 1u << (10 - level);
    for (std::size_t k = 0; k < (1u << level); ++k) {
        double q = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double v = lat.increment(k * m + i)[0];
            q += v * v;
        }
        const double expect = 0.5 * (coarse[k] * coarse[k] - q);
        CHECK(J.step(k)[0] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("iterated integrals: symmetry identity J + J^T = dW dW^T - Q") {
    const int d1 = 3;
    const BrownianLattice lat = generate_lattice(d1, 9, 17, 4);
    const int level = 3;
    const auto J = iterated_integrals(lat, level);
    const auto coarse = coarse_increments(lat, level);
    const std::size_t m = 1u << (9 - level);
    for (std::size_t k = 0; k < (1u << level); ++k) {
        // fine cross quadratic covariation of the step
        Mat q(d1, d1);
        for (std::size_t i = 0; i < m; ++i) {
            const double* inc = lat.increment(k * m + i);
            for (int a = 0; a < d1; ++a)
                for (int b = 0; b < d1; ++b) q(a, b) += inc[a] * inc[b];
        }
        const double* j = J.step(k);
        for (int a = 0; a < d1; ++a)
            for (int b = 0; b < d1; ++b) {
                const double lhs = j[a * d1 + b] + j[b * d1 + a];
                const double rhs = coarse[k * d1 + a] * coarse[k * d1 + b] - q(a, b);
                CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
            }
    }
}

TEST_CASE("iterated integrals vanish on a zero lattice") {
    BrownianLattice lat = generate_lattice(2, 8, 1, 1);
    std::fill(lat.increments.begin(), lat.increments.end(), 0.0);
    const auto J = iterated_integrals(lat, 3);
    for (double v : J.values) CHECK(v == 0.0);
}

TEST_CASE("iterated integrals demand 16 sub-steps per coarse step") {
    const BrownianLattice lat = generate_lattice(1, 8, 1, 1);
    CHECK_THROWS_AS(iterated_integrals(lat, 5), InvalidLevelError);
    CHECK_NOTHROW(iterated_integrals(lat, 4));
}

TEST_CASE("Ito isometry: E[J] ~ 0 and E[J^2] ~ h^2/2") {
    // level 2 on a level-8 lattice: gap 6, h = 1/4
    const std::size_t paths = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (std::uint64_t p = 0; p < paths; ++p) {
        const BrownianLattice lat = generate_lattice(1, 8, 31415, p);
        const auto J = iterated_integrals(lat, 2);
        const double j = J.step(0)[0];
        sum += j;
        sum2 += j * j;
    }
    const double h = 0.25;
    const double mean = sum / paths;
    const double second = sum2 / paths;
    const double se = std::sqrt((second - mean * mean) / paths);
    CHECK(std::fabs(mean) < 3.0 * se);
    CHECK(second == doctest::Approx(h * h / 2.0).epsilon(0.05));
}

TEST_CASE("good event indicator: trivial cases") {
    BrownianLattice lat = generate_lattice(1, 8, 3, 3);
    std::fill(lat.increments.begin(), lat.increments.end(), 0.0);
    CHECK(good_event_indicator(lat, 4, 0.1));

    lat.increments[37] = 10.0;  // one huge oscillation
    CHECK_FALSE(good_event_indicator(lat, 4, 19.0));  // |W - W_right| reaches 10 > 9.5
    CHECK(good_event_indicator(lat, 4, 41.0));        // 10 < 20.5
    CHECK_THROWS_AS(good_event_indicator(lat, 9, 1.0), InvalidLevelError);
}

TEST_CASE("binary dump round-trips bit for bit") {
    const BrownianLattice lat = generate_lattice(3, 6, 123456789, 42);
    std::stringstream buffer;
    dump_lattice(lat, buffer);
    const BrownianLattice back = load_lattice(buffer);
    CHECK(back.dim_noise == lat.dim_noise);
    CHECK(back.level_ref == lat.level_ref);
    CHECK(back.seed == lat.seed);
    CHECK(back.path_index == lat.path_index);
    REQUIRE(back.increments.size() == lat.increments.size());
    CHECK(std::memcmp(back.increments.data(), lat.increments.data(),
                      lat.increments.size() * sizeof(double)) == 0);

    std::stringstream truncated(buffer.str().substr(0, 100));
    CHECK_THROWS_AS(load_lattice(truncated), ConfigurationError);
}

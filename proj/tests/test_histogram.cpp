#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddl/histogram.hpp"
#include "ddl/rng.hpp"

#include "test_util.hpp"

using namespace ddl;
using namespace ddl::testutil;

namespace {

Vector random_similarities(Rng& rng, std::size_t count) {
    Vector s(count);
    for (double& x : s) x = 2.0 * rng.uniform() - 1.0;
    return s;
}

} // namespace

TEST_CASE("node layout") {
    CHECK(histogram_nodes(2) == Vector{-1.0, 1.0});
    CHECK(histogram_nodes(3) == Vector{-1.0, 0.0, 1.0});
    CHECK(histogram_nodes(5) == Vector{-1.0, -0.5, 0.0, 0.5, 1.0});
    CHECK_THROWS_AS((void)histogram_nodes(1), std::invalid_argument);
}

TEST_CASE("node endpoints are exact for any bin count") {
    for (const std::size_t bins : {2u, 7u, 10u, 33u, 100u}) {
        const Vector nodes = histogram_nodes(bins);
        CHECK(nodes.front() == -1.0);
        CHECK(nodes.back() == 1.0);
    }
}

TEST_CASE("a sharp kernel concentrates mass at the nearest node") {
    const Vector s{0.0};
    const SoftHistogram h = SoftHistogram::estimate(s, 3, 1e6);
    CHECK(h.masses()[1] > 0.999999);
    CHECK(h.masses()[0] < 1e-6);
    CHECK(h.masses()[2] < 1e-6);
}

TEST_CASE("three-bin estimate matches the direct formula") {
    const Vector s{0.0};
    const SoftHistogram h = SoftHistogram::estimate(s, 3, 1.0);
    // raw masses evaluated directly: exp(-gamma (s - t)^2) at t = -1, 0, 1
    const double side = std::exp(-1.0);
    const double total = side + 1.0 + side;
    CHECK(h.raw_masses()[0] == doctest::Approx(side).epsilon(1e-15));
    CHECK(h.raw_masses()[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(h.masses()[0] == doctest::Approx(side / total).epsilon(1e-15));
    CHECK(h.masses()[1] == doctest::Approx(1.0 / total).epsilon(1e-15));
    CHECK(h.masses()[2] == doctest::Approx(side / total).epsilon(1e-15));
}

TEST_CASE("masses always normalize to one and stay non-negative") {
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        Rng rng(100 + trial);
        const std::size_t bins = 2 + rng.uniform_index(99);
        const std::size_t count = 1 + rng.uniform_index(48);
        const double gamma = rng.uniform() < 0.5 ? default_gamma(bins) : 0.5 + 20.0 * rng.uniform();
        const SoftHistogram h = SoftHistogram::estimate(random_similarities(rng, count), bins, gamma);
        double sum = 0.0;
        for (const double m : h.masses()) {
            CHECK(m >= 0.0);
            sum += m;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("histogram is permutation-invariant") {
    Rng rng(7);
    Vector s = random_similarities(rng, 17);
    const SoftHistogram a = SoftHistogram::estimate(s, 20, default_gamma(20));
    std::reverse(s.begin(), s.end());
    rng.shuffle(s);
    const SoftHistogram b = SoftHistogram::estimate(s, 20, default_gamma(20));
    for (std::size_t r = 0; r < a.bins(); ++r)
        CHECK(a.masses()[r] == doctest::Approx(b.masses()[r]).epsilon(1e-14));
}

TEST_CASE("estimate rejects invalid input") {
    CHECK_THROWS_AS((void)SoftHistogram::estimate(Vector{}, 10, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)SoftHistogram::estimate(Vector{0.2}, 10, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)SoftHistogram::estimate(Vector{0.2}, 10, -1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)SoftHistogram::estimate(Vector{1.5}, 10, 1.0), std::invalid_argument);
}

TEST_CASE("raw-mass gradient matches the closed form exactly") {
    // -2 gamma exp(-gamma (s - t_r)^2) (s - t_r) / |S| at 1000 random points
    std::size_t points = 0;
    for (std::uint64_t trial = 0; trial < 25 && points < 1000; ++trial) {
        Rng rng(500 + trial);
        const std::size_t bins = 2 + rng.uniform_index(60);
        const std::size_t count = 1 + rng.uniform_index(20);
        const double gamma = 0.5 + 30.0 * rng.uniform();
        const Vector s = random_similarities(rng, count);
        const SoftHistogram h = SoftHistogram::estimate(s, bins, gamma);
        const Matrix grad = h.raw_mass_gradient();
        const Vector nodes = histogram_nodes(bins);
        for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t r = 0; r < bins; ++r) {
                const double d = s[i] - nodes[r];
                const double expected =
                    -2.0 * gamma * std::exp(-gamma * d * d) * d / static_cast<double>(count);
                CHECK(std::abs(grad(r, i) - expected) <= 1e-12);
                ++points;
            }
        }
    }
    CHECK(points >= 1000);
}

TEST_CASE("a sample sitting on a node has zero raw derivative for that bin") {
    const Vector s{0.0};
    const SoftHistogram h = SoftHistogram::estimate(s, 3, 2.0); // node t_2 = 0
    CHECK(h.raw_mass_gradient()(1, 0) == 0.0);
}

TEST_CASE("normalized-mass gradients sum to zero over bins") {
    Rng rng(17);
    const Vector s = random_similarities(rng, 15);
    const SoftHistogram h = SoftHistogram::estimate(s, 24, default_gamma(24));
    const Matrix grad = h.mass_gradient();
    for (std::size_t i = 0; i < s.size(); ++i) {
        double column = 0.0;
        for (std::size_t r = 0; r < h.bins(); ++r) column += grad(r, i);
        CHECK(std::abs(column) < 1e-12);
    }
}

TEST_CASE("analytic mass gradient matches central finite differences") {
    // R = 10, gamma = 4, h = 1e-6, max rel err < 1e-6
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        Rng rng(900 + trial);
        Vector s = random_similarities(rng, 8);
        for (double& x : s) x *= 0.98; // keep s +- h inside [-1, 1]
        const std::size_t bins = 10;
        const double gamma = 4.0;
        const Matrix analytic = SoftHistogram::estimate(s, bins, gamma).mass_gradient();

        const double h = 1e-6;
        for (std::size_t i = 0; i < s.size(); ++i) {
            Vector up = s, down = s;
            up[i] += h;
            down[i] -= h;
            const SoftHistogram hu = SoftHistogram::estimate(up, bins, gamma);
            const SoftHistogram hd = SoftHistogram::estimate(down, bins, gamma);
            for (std::size_t r = 0; r < bins; ++r) {
                const double fd = (hu.masses()[r] - hd.masses()[r]) / (2.0 * h);
                worst = std::max(worst, relative_error(analytic(r, i), fd, 1e-3));
            }
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("backprop contracts the gradient matrix") {
    Rng rng(31);
    const Vector s = random_similarities(rng, 9);
    const SoftHistogram h = SoftHistogram::estimate(s, 12, default_gamma(12));
    Vector upstream(h.bins());
    for (double& u : upstream) u = rng.gaussian();
    const Vector via_backprop = h.backprop(upstream);
    const Matrix grad = h.mass_gradient();
    for (std::size_t i = 0; i < s.size(); ++i) {
        double expected = 0.0;
        for (std::size_t r = 0; r < h.bins(); ++r) expected += upstream[r] * grad(r, i);
        CHECK(via_backprop[i] == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("one perturbed similarity moves each mass at most Lipschitz-fast") {
    // |du_r/ds| <= 2 gamma max_x |x| e^(-gamma x^2) / |S| = sqrt(2 gamma / e)/|S|,
    // |dT/ds| <= R times that, and T >= exp(-gamma step^2 / 4) since every
    // sample sits within step/2 of some node; combining through the quotient
    // rule bounds |dh_r/ds| by (R + 1) sqrt(2 gamma / e) exp(gamma step^2/4)/|S|.
    for (std::uint64_t trial = 0; trial < 40; ++trial) {
        Rng rng(1200 + trial);
        const std::size_t bins = 2 + rng.uniform_index(40);
        const std::size_t count = 1 + rng.uniform_index(20);
        const double gamma = rng.uniform() < 0.5 ? default_gamma(bins) : 1.0 + 10.0 * rng.uniform();
        Vector s = random_similarities(rng, count);
        for (double& x : s) x *= 0.99;

        const double step = 2.0 / static_cast<double>(bins - 1);
        const double lipschitz = (static_cast<double>(bins) + 1.0) *
                                 std::sqrt(2.0 * gamma / std::numbers::e) *
                                 std::exp(gamma * step * step / 4.0) / static_cast<double>(count);

        const double eps = 1e-4;
        const SoftHistogram before = SoftHistogram::estimate(s, bins, gamma);
        Vector moved = s;
        moved[rng.uniform_index(count)] += eps;
        const SoftHistogram after = SoftHistogram::estimate(moved, bins, gamma);
        for (std::size_t r = 0; r < bins; ++r) {
            const double delta = std::abs(after.masses()[r] - before.masses()[r]);
            CHECK(delta <= lipschitz * eps + 1e-12);
        }
    }
}

TEST_CASE("expectation basics") {
    CHECK(expectation(Vector{0.5}) == 0.5);
    CHECK(expectation(Vector{-1.0, 1.0}) == 0.0);
    CHECK_THROWS_AS((void)expectation(Vector{}), std::invalid_argument);
}

TEST_CASE("default gamma gives the kernel one bin step of standard deviation") {
    const std::size_t bins = 100;
    const double step = 2.0 / 99.0;
    CHECK(default_gamma(bins) == doctest::Approx(1.0 / (2.0 * step * step)).epsilon(1e-15));
}

TEST_CASE("histogram csv export has one row per bin") {
    Rng rng(77);
    const SoftHistogram h = SoftHistogram::estimate(random_similarities(rng, 10), 18, 5.0);
    std::ostringstream out;
    write_histogram_csv(out, h);
    std::istringstream in(out.str());
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);
    CHECK(line == "node,mass");
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 18);
}

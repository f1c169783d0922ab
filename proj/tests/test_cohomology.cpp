#include "bgeo/cohomology.hpp"
#include "bgeo/surface2d.hpp"
#include "doctest.h"

#include <boost/math/special_functions/binomial.hpp>

#include <numeric>
#include <random>

using namespace bgeo;

namespace {

BettiData surface(int g, int n) {
    return BettiData{2, surface_betti(g), std::vector<std::vector<int>>(static_cast<std::size_t>(n), {1, 1})};
}

int total(const std::vector<int>& v) { return std::accumulate(v.begin(), v.end(), 0); }

}  // namespace

TEST_CASE("b-Betti numbers of surfaces") {
    CHECK(b_betti(surface(0, 1)) == std::vector<int>{1, 1, 2});
    CHECK(b_betti(surface(1, 2)) == std::vector<int>{1, 4, 3});
    CHECK(b_betti(surface(1, 2))[2] == 2 + 1);
    CHECK(poisson_betti(surface(0, 1)) == std::vector<int>{1, 1, 2});
}

TEST_CASE("surface formula agrees for g <= 10 and n <= 10") {
    for (int g = 0; g <= 10; ++g) {
        for (int n = 1; n <= 10; ++n) {
            auto bb = poisson_betti(surface(g, n));
            auto ref = surface_poisson_cohomology(g, n);
            CHECK(bb == std::vector<int>{ref[0], ref[1], ref[2]});
            CHECK(bb == std::vector<int>{1, n + 2 * g, n + 1});
        }
    }
}

TEST_CASE("malformed data is rejected") {
    CHECK_THROWS_AS(b_betti(BettiData{2, {1, 0}, {}}), CohomologyError);
    CHECK_THROWS_AS(b_betti(BettiData{2, {1, 0, 1}, {{1, 1, 1}}}), CohomologyError);
    CHECK_THROWS_AS(b_betti(BettiData{2, {1, -1, 1}, {}}), CohomologyError);
    CHECK_THROWS_AS(parse_betti("1,x"), CohomologyError);
    CHECK(parse_betti(" 1, 3,3 ,1") == std::vector<int>{1, 3, 3, 1});
}

TEST_CASE("duality warnings") {
    BettiData ok{2, {1, 2, 1}, {{1, 1}}};
    CHECK(ok.warnings().empty());
    BettiData odd{2, {1, 0, 0}, {{1, 1}}};
    CHECK(odd.warnings().size() == 1);
}

TEST_CASE("nonvanishing witnesses") {
    auto t4 = torus_betti(4);
    BettiData s3{4, t4, {sphere_betti(3)}};
    auto r = nonvanishing_witness(s3);
    CHECK_FALSE(r.consistent);
    bool b1_failed = false;
    for (const auto& c : r.checks)
        if (c.name == "b1(Z_0) >= 1") b1_failed = !c.ok;
    CHECK(b1_failed);

    BettiData t3{4, t4, {torus_betti(3)}};
    CHECK(torus_betti(3) == std::vector<int>{1, 3, 3, 1});
    CHECK(nonvanishing_witness(t3).consistent);
    CHECK(nonvanishing_witness(surface(0, 1)).consistent);
    CHECK(nonvanishing_witness(BettiData{2, {1, 0, 1}, {}}).consistent);
    CHECK_FALSE(nonvanishing_witness(BettiData{2, {1, 0, 0}, {}}).consistent);
}

TEST_CASE("built-in tables") {
    for (int n = 1; n <= 8; ++n) {
        auto t = torus_betti(n);
        for (int k = 0; k <= n; ++k) {
            CHECK(t[static_cast<std::size_t>(k)] ==
                  static_cast<int>(boost::math::binomial_coefficient<double>(static_cast<unsigned>(n), static_cast<unsigned>(k))));
        }
        CHECK(total(sphere_betti(n)) == 2);
    }
    CHECK(product_betti(sphere_betti(2), sphere_betti(2)) == std::vector<int>{1, 0, 2, 0, 1});
    CHECK(product_betti(surface_betti(2), {1, 1}) == std::vector<int>{1, 5, 5, 1});
}

TEST_CASE("property: splitting identities on random data") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> dim_d(1, 7), val(0, 6), comps(0, 4);
    for (int trial = 0; trial < 300; ++trial) {
        BettiData data;
        data.dim = dim_d(rng);
        for (int k = 0; k <= data.dim; ++k) data.betti_M.push_back(val(rng));
        int r = comps(rng);
        int ztotal = 0;
        for (int i = 0; i < r; ++i) {
            std::vector<int> z;
            for (int k = 0; k < data.dim; ++k) z.push_back(val(rng));
            ztotal += total(z);
            data.components.push_back(z);
        }
        auto bb = b_betti(data);
        CHECK(bb.size() == static_cast<std::size_t>(data.dim) + 1);
        CHECK(total(bb) == total(data.betti_M) + ztotal);
        CHECK(bb[0] == data.betti_M[0]);
        CHECK(poisson_betti(data) == bb);
        int top_shift = 0;
        for (const auto& z : data.components) top_shift += z.back();
        CHECK(bb.back() == data.betti_M.back() + top_shift);
    }
}

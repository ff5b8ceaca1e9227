#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "mtlforge/rng.hpp"

using namespace mtlforge;

TEST_CASE("same seed gives identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("named streams are independent and reproducible") {
    Rng a = Rng::stream(7, "init/encoder");
    Rng b = Rng::stream(7, "init/encoder");
    Rng c = Rng::stream(7, "init/head/primary");
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());
}

TEST_CASE("uniform stays in [0,1)") {
    Rng r(3);
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("bounded covers the full range without bias holes") {
    Rng r(5);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        uint64_t v = r.bounded(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("normal has roughly standard moments") {
    Rng r(11);
    const int n = 20000;
    double mean = 0.0, var = 0.0;
    std::vector<double> xs(n);
    for (auto& x : xs) {
        x = r.normal();
        mean += x;
    }
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n - 1;
    CHECK(std::fabs(mean) < 0.03);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("trunc_normal respects the limit") {
    Rng r(13);
    for (int i = 0; i < 5000; ++i) CHECK(std::fabs(r.trunc_normal(2.0)) <= 2.0);
}

TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> v2 = v1;
    Rng a(99), b(99);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
    std::set<int> s(v1.begin(), v1.end());
    CHECK(s.size() == 10);
}

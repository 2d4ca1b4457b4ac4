#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bidir/rng.hpp"
#include "bidir/tensor.hpp"

using namespace bidir;

TEST_CASE("matmul identity and hand-checked product") {
    TensorD a = {{5, 6}, {7, 8}};
    TensorD i2 = TensorD::identity(2);
    CHECK(matmul(i2, a).array().isApprox(a.array()));
    CHECK(matmul(a, i2).array().isApprox(a.array()));

    TensorD b = {{1, 2}, {3, 4}};
    TensorD ones({2, 1});
    ones[0] = ones[1] = 1;
    TensorD c = matmul(b, ones);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == 3);
    CHECK(c[1] == 7);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    TensorD a({2, 3}), b({2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul surfaces non-finite results") {
    TensorD a = {{1, 2}, {3, 4}};
    TensorD bad = {{std::nan(""), 0}, {0, 0}};
    CHECK_THROWS_AS(matmul(a, bad), NumericError);
}

TEST_CASE("transpose definition, involution, symmetric fixpoint") {
    TensorD a = {{1, 2}, {3, 4}};
    TensorD t = transpose(a);
    CHECK(t(0, 1) == 3);
    CHECK(t(1, 0) == 2);
    CHECK(transpose(t).array().isApprox(a.array()));

    TensorD sym = {{2, 5}, {5, 9}};
    CHECK(transpose(sym).array().isApprox(sym.array()));

    TensorD v({4});
    CHECK_THROWS_AS(transpose(v), ShapeError);
}

TEST_CASE("elementwise ops") {
    TensorD x = TensorD::vec({-1, 1});
    TensorD relu = max_with_scalar(x, 0.0);
    CHECK(relu[0] == 0);
    CHECK(relu[1] == 1);

    TensorD y = TensorD::vec({-0.2, 0.5, 1.3});
    TensorD c = clip(y, 0.0, 1.0);
    CHECK(c[0] == 0);
    CHECK(c[1] == 0.5);
    CHECK(c[2] == 1);

    TensorD s = sign(TensorD::vec({-3, 0, 2}));
    CHECK(s[0] == -1);
    CHECK(s[1] == 0);
    CHECK(s[2] == 1);

    TensorD a({3}), b({4});
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(mul(a, b), ShapeError);
}

TEST_CASE("clip is idempotent") {
    Rng rng(3);
    TensorD v = sample_uniform(rng, -2.0, 2.0, {257});
    TensorD once = clip(v, 0.0, 1.0);
    TensorD twice = clip(once, 0.0, 1.0);
    CHECK((once.array() == twice.array()).all());
}

TEST_CASE("reductions") {
    TensorD v = TensorD::vec({0.1, 0.9, 0.3});
    CHECK(max(v) == doctest::Approx(0.9));
    CHECK(argmax(v) == 1);
    CHECK(argmax(TensorD::vec({0.5, 0.5})) == 0);  // ties break low

    TensorD m = {{1, 2}, {3, 4}};
    TensorD s0 = sum(m, 0);
    CHECK(s0[0] == 4);
    CHECK(s0[1] == 6);
    TensorD s1 = sum(m, 1);
    CHECK(s1[0] == 3);
    CHECK(s1[1] == 7);
    CHECK(sum(m) == 10);

    CHECK_THROWS_AS(sum(m, 2), ValueError);
    CHECK_THROWS_AS(max(TensorD()), ValueError);
    CHECK_THROWS_AS(argmax(TensorD()), ValueError);
}

TEST_CASE("argmax_rows tie rule") {
    TensorD m = {{0.5, 0.5, 0.2}, {0.1, 0.3, 0.3}};
    auto idx = argmax_rows(m);
    CHECK(idx[0] == 0);
    CHECK(idx[1] == 1);
}

TEST_CASE("uniform sampling: range, mean, determinism") {
    Rng rng(42);
    TensorD u = sample_uniform(rng, 0.0, 1.0, {1000000});
    CHECK((u.array() >= 0.0).all());
    CHECK((u.array() < 1.0).all());
    CHECK(u.array().mean() == doctest::Approx(0.5).epsilon(0.02));

    Rng r1(7), r2(7);
    TensorD a = sample_uniform(r1, -1.0, 1.0, {64});
    TensorD b = sample_uniform(r2, -1.0, 1.0, {64});
    CHECK((a.array() == b.array()).all());

    CHECK_THROWS_AS(sample_uniform(rng, 1.0, 1.0, {4}), ValueError);
}

TEST_CASE("normal sampling: variance and parameter checks") {
    Rng rng(9);
    TensorD n = sample_normal(rng, 0.0, 1.0, {1000000});
    double mean = n.array().mean();
    double var = (n.array() - mean).square().mean();
    CHECK(mean == doctest::Approx(0.0).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
    CHECK_THROWS_AS(sample_normal(rng, 0.0, 0.0, {4}), ValueError);
    CHECK_THROWS_AS(sample_normal(rng, 0.0, -1.0, {4}), ValueError);
}

TEST_CASE("rng stream is a pure function of seed and call sequence") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform(0, 1) == b.uniform(0, 1));
        CHECK(a.normal(0, 2) == b.normal(0, 2));
        CHECK(a.below(17) == b.below(17));
    }
}

TEST_CASE("adjoint identity <Wx,y> == <x,W'y>") {
    Rng rng(100);
    for (int trial = 0; trial < 50; ++trial) {
        Index m = 1 + Index(rng.below(8)), n = 1 + Index(rng.below(8));
        TensorD w = sample_uniform(rng, -1.0, 1.0, {m, n});
        TensorD x = sample_uniform(rng, -1.0, 1.0, {n, 1});
        TensorD y = sample_uniform(rng, -1.0, 1.0, {m, 1});
        double lhs = dot(matmul(w, x), y);
        double rhs = dot(x, matmul(transpose(w), y));
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("tensor shape plumbing") {
    CHECK_THROWS_AS(TensorD({2, 0}), ShapeError);
    TensorD t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
    TensorD r = t.reshaped({3, 2});
    CHECK(r.shape() == Shape{3, 2});
    CHECK_THROWS_AS((TensorD{{1, 2}, {3}}), ShapeError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "xmeta/errors.hpp"
#include "xmeta/numerics.hpp"
#include "xmeta/rng.hpp"

using namespace xmeta;

TEST_CASE("softmax of log-proportions recovers the proportions") {
    const Vec64 p = softmax({std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(p[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("softmax is shift-invariant and stable at extreme magnitudes") {
    const Vec64 a = softmax({1.0, 2.0});
    const Vec64 b = softmax({1.0 + 1e6, 2.0 + 1e6});
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
    const Vec64 huge = softmax({1e6, -1e6, 0.0});
    CHECK(std::isfinite(huge[0]));
    CHECK(huge[0] == doctest::Approx(1.0));
    CHECK(huge[1] >= 0.0);
}

TEST_CASE("softmax outputs lie on the simplex and keep the argmax") {
    Rng rng(42);
    for (int trial = 0; trial < 2000; ++trial) {
        const size_t n = 1 + rng.next_below(8);
        Vec64 logits(n);
        for (double& v : logits) v = rng.next_uniform(-30.0, 30.0);
        const Vec64 p = softmax(logits);
        double sum = 0.0;
        size_t argmax_l = 0, argmax_p = 0;
        for (size_t i = 0; i < n; ++i) {
            CHECK(p[i] >= 0.0);
            sum += p[i];
            if (logits[i] > logits[argmax_l]) argmax_l = i;
            if (p[i] > p[argmax_p]) argmax_p = i;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(argmax_l == argmax_p);
    }
}

TEST_CASE("softmax rejects empty and non-finite input") {
    CHECK_THROWS_AS(softmax({}), std::invalid_argument);
    CHECK_THROWS_AS(softmax({1.0, std::nan("")}), NumericError);
}

TEST_CASE("cross entropy hand values and probability floor") {
    CHECK(cross_entropy({0.5, 0.5}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(cross_entropy({0.25, 0.75}, 1) == doctest::Approx(-std::log(0.75)).epsilon(1e-15));
    const double floored = cross_entropy({0.0, 1.0}, 0);
    CHECK(std::isfinite(floored));
    CHECK(floored == doctest::Approx(-std::log(kProbFloor)));
}

TEST_CASE("adamw first step matches the closed form") {
    AdamWParams hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.0;
    Vec64 params{1.0, -2.0};
    const Vec64 grads{3.0, -0.5};
    AdamWState state(2, hp);
    adamw_step(params, grads, state);
    for (size_t i = 0; i < 2; ++i) {
        const double mhat = grads[i];  // bias correction cancels at t=1
        const double vhat = grads[i] * grads[i];
        const double expected = (i == 0 ? 1.0 : -2.0) - hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
        CHECK(std::abs(params[i] - expected) < 1e-12);
    }
}

TEST_CASE("adamw two steps match an independently coded recurrence") {
    AdamWParams hp;
    hp.lr = 0.05;
    hp.weight_decay = 0.02;
    Vec64 params{0.7};
    AdamWState state(1, hp);
    const Vec64 g1{1.3}, g2{-0.4};

    double x = 0.7, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
        const double g = t == 1 ? g1[0] : g2[0];
        m = hp.beta1 * m + (1 - hp.beta1) * g;
        v = hp.beta2 * v + (1 - hp.beta2) * g * g;
        const double mh = m / (1 - std::pow(hp.beta1, t));
        const double vh = v / (1 - std::pow(hp.beta2, t));
        x -= hp.lr * mh / (std::sqrt(vh) + hp.eps) + hp.lr * hp.weight_decay * x;
    }
    adamw_step(params, g1, state);
    adamw_step(params, g2, state);
    CHECK(std::abs(params[0] - x) < 1e-12);
}

TEST_CASE("adamw decoupled weight decay acts on zero gradients") {
    AdamWParams hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.01;
    Vec64 params{1.0};
    AdamWState state(1, hp);
    adamw_step(params, {0.0}, state);
    CHECK(params[0] == doctest::Approx(1.0 - 0.1 * 0.01 * 1.0).epsilon(1e-15));
}

TEST_CASE("adamw with zero gradient and zero decay is a fixed point") {
    AdamWParams hp;
    hp.weight_decay = 0.0;
    Vec64 params{3.14, -2.71};
    const Vec64 before = params;
    AdamWState state(2, hp);
    for (int t = 0; t < 5; ++t) adamw_step(params, {0.0, 0.0}, state);
    CHECK(params[0] == before[0]);
    CHECK(params[1] == before[1]);
}

TEST_CASE("adamw rejects non-finite gradients") {
    AdamWParams hp;
    Vec64 params{1.0};
    AdamWState state(1, hp);
    Vec64 bad{std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(adamw_step(params, bad, state), NumericError);
}

TEST_CASE("eigen_sym solves a textbook 2x2") {
    Mat64 a(2, 2);
    a(0, 0) = 2.0; a(0, 1) = 1.0;
    a(1, 0) = 1.0; a(1, 1) = 2.0;
    const EigenSym e = eigen_sym(a);
    CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-12));
    // A v = lambda v for both columns.
    for (size_t j = 0; j < 2; ++j) {
        for (size_t i = 0; i < 2; ++i) {
            const double av = a(i, 0) * e.vectors(0, j) + a(i, 1) * e.vectors(1, j);
            CHECK(av == doctest::Approx(e.values[j] * e.vectors(i, j)).epsilon(1e-10));
        }
    }
}

TEST_CASE("eigen_sym reconstructs a random symmetric matrix") {
    Rng rng(7);
    const size_t n = 6;
    Mat64 a(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.next_uniform(-2.0, 2.0);
    const EigenSym e = eigen_sym(a);
    for (size_t j = 1; j < n; ++j) CHECK(e.values[j - 1] >= e.values[j]);
    // V diag(values) V^T == A, and V^T V == I.
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double rec = 0.0, ortho = 0.0;
            for (size_t k = 0; k < n; ++k) {
                rec += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
                ortho += e.vectors(k, i) * e.vectors(k, j);
            }
            CHECK(std::abs(rec - a(i, j)) < 1e-10);
            CHECK(std::abs(ortho - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
    }
}

TEST_CASE("matmul variants agree with explicit transposition") {
    Rng rng(11);
    Mat64 a(3, 4), b(3, 5);
    for (double& v : a.data) v = rng.next_gaussian();
    for (double& v : b.data) v = rng.next_gaussian();
    const Mat64 tn = matmul_tn(a, b);            // (4x3)(3x5)
    const Mat64 ref = matmul(transpose(a), b);
    REQUIRE(tn.rows == 4);
    REQUIRE(tn.cols == 5);
    for (size_t i = 0; i < tn.data.size(); ++i) CHECK(tn.data[i] == doctest::Approx(ref.data[i]));

    Mat64 c(4, 6), d(5, 6);
    for (double& v : c.data) v = rng.next_gaussian();
    for (double& v : d.data) v = rng.next_gaussian();
    const Mat64 nt = matmul_nt(c, d);            // (4x6)(6x5)
    const Mat64 ref2 = matmul(c, transpose(d));
    for (size_t i = 0; i < nt.data.size(); ++i) CHECK(nt.data[i] == doctest::Approx(ref2.data[i]));
}

TEST_CASE("vector helpers hand values") {
    CHECK(dot({1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}) == 32.0);
    CHECK(l2_norm({3.0, 4.0}) == 5.0);
    CHECK(squared_distance({1.0, 1.0}, {4.0, 5.0}) == 25.0);
    CHECK(euclidean_distance({1.0, 1.0}, {4.0, 5.0}) == 5.0);
    const Vec64 mid = interpolate({0.0, 10.0}, {10.0, 0.0}, 0.25);
    CHECK(mid[0] == 2.5);
    CHECK(mid[1] == 7.5);
    Vec64 y{1.0, 1.0};
    axpy(2.0, {3.0, -1.0}, y);
    CHECK(y[0] == 7.0);
    CHECK(y[1] == -1.0);
}

TEST_CASE("center_columns zeroes the means and reports them") {
    Mat64 a(3, 2);
    a(0, 0) = 1.0; a(0, 1) = 10.0;
    a(1, 0) = 2.0; a(1, 1) = 20.0;
    a(2, 0) = 3.0; a(2, 1) = 30.0;
    const Vec64 means = center_columns(a);
    CHECK(means[0] == doctest::Approx(2.0));
    CHECK(means[1] == doctest::Approx(20.0));
    const Vec64 after = col_means(a);
    CHECK(std::abs(after[0]) < 1e-15);
    CHECK(std::abs(after[1]) < 1e-15);
}

TEST_CASE("finite_diff_check accepts a correct gradient and flags a wrong one") {
    const auto quadratic = [](const Vec64& p) {
        double s = 0.0;
        for (double v : p) s += v * v;
        return s;
    };
    const Vec64 at{0.3, -1.2, 2.0};
    const Vec64 grad{0.6, -2.4, 4.0};
    CHECK(finite_diff_check(quadratic, at, grad, 1e-5) < 1e-8);
    Vec64 wrong = grad;
    wrong[1] += 0.5;
    CHECK(finite_diff_check(quadratic, at, wrong, 1e-5) > 1e-2);
}

TEST_CASE("check_finite raises on NaN and Inf") {
    CHECK_NOTHROW(check_finite(Vec64{1.0, -2.0}, "ok"));
    CHECK_THROWS_AS(check_finite(Vec64{std::nan("")}, "bad"), NumericError);
    CHECK_THROWS_AS(check_finite(Vec64{std::numeric_limits<double>::infinity()}, "bad"),
                    NumericError);
}

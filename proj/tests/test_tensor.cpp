#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gtem/ops.hpp"
#include "gtem/param.hpp"
#include "gtem/tensor.hpp"

#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>

using namespace gtem;
using oracles::bit_equal;
using oracles::max_rel_err;
using oracles::random_tensor;

TEST_CASE("tensor shape and data invariants") {
    Tensor t = Tensor::zeros({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.rank() == 3);
    CHECK_THROWS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}));
    CHECK(Tensor::scalar(5.0).item() == 5.0);
}

TEST_CASE("linear matches the triple-loop oracle") {
    Rng rng(1);
    SUBCASE("zero input, zero bias propagates zero") {
        Tensor x = Tensor::zeros({3, 4});
        Tensor w = random_tensor({4, 5}, rng);
        Tensor b = Tensor::zeros({5});
        Tensor y = linear(x, w, b);
        for (double v : y.data()) CHECK(v == 0.0);
    }
    SUBCASE("identity weight") {
        Tensor x = Tensor::from({1, 2}, {1.0, 2.0});
        Tensor w = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
        Tensor y = linear(x, w, Tensor::zeros({2}));
        CHECK(y.at({0, 0}) == 1.0);
        CHECK(y.at({0, 1}) == 2.0);
    }
    SUBCASE("random case") {
        for (int trial = 0; trial < 20; ++trial) {
            int64_t rows = 1 + static_cast<int64_t>(rng.below(6));
            int64_t k = 1 + static_cast<int64_t>(rng.below(7));
            int64_t ko = 1 + static_cast<int64_t>(rng.below(7));
            Tensor x = random_tensor({rows, k}, rng);
            Tensor w = random_tensor({k, ko}, rng);
            Tensor b = random_tensor({ko}, rng);
            Tensor y = linear(x, w, b);
            auto expect = oracles::naive_linear(
                {x.data().begin(), x.data().end()}, rows, k, {w.data().begin(), w.data().end()},
                ko, {b.data().begin(), b.data().end()});
            Tensor e = Tensor::from({rows, ko}, std::move(expect));
            CHECK(max_rel_err(y, e) < 1e-12);
        }
    }
    SUBCASE("shape mismatch throws") {
        Tensor x = Tensor::zeros({2, 3});
        Tensor w = Tensor::zeros({4, 5});
        CHECK_THROWS(linear(x, w, Tensor()));
    }
}

TEST_CASE("conv2d matches the sliding-window oracle") {
    Rng rng(2);
    SUBCASE("averaging kernel keeps a constant interior constant") {
        Tensor x = Tensor::full({1, 1, 6, 6}, 0.5);
        Tensor k = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
        Tensor y = conv2d(x, k, {.stride = 1, .pad = 1, .depthwise = false});
        CHECK(y.shape() == Shape{1, 1, 6, 6});
        for (int64_t i = 1; i < 5; ++i)
            for (int64_t j = 1; j < 5; ++j) CHECK(y.at({0, 0, i, j}) == doctest::Approx(0.5));
    }
    SUBCASE("1x1 identity kernel") {
        Tensor x = random_tensor({2, 3, 4, 4}, rng);
        Tensor k = Tensor::zeros({3, 3, 1, 1});
        for (int64_t c = 0; c < 3; ++c) k.raw()[static_cast<size_t>(c * 3 + c)] = 1.0;
        Tensor y = conv2d(x, k, {.stride = 1, .pad = 0, .depthwise = false});
        CHECK(bit_equal(x, y));
    }
    SUBCASE("random dense and depthwise cases") {
        for (int trial = 0; trial < 12; ++trial) {
            bool depthwise = trial % 2;
            int64_t n = 1 + static_cast<int64_t>(rng.below(2));
            int64_t ci = 1 + static_cast<int64_t>(rng.below(3));
            int64_t co = depthwise ? ci : 1 + static_cast<int64_t>(rng.below(3));
            int64_t stride = 1 + static_cast<int64_t>(rng.below(2));
            int64_t pad = static_cast<int64_t>(rng.below(2));
            Tensor x = random_tensor({n, ci, 5 + static_cast<int64_t>(rng.below(3)), 5}, rng);
            Tensor k = depthwise ? random_tensor({ci, 1, 3, 3}, rng)
                                 : random_tensor({co, ci, 3, 3}, rng);
            Tensor b = random_tensor({co}, rng);
            Tensor y = conv2d(x, k, {.stride = stride, .pad = pad, .depthwise = depthwise}, b);
            Tensor e = oracles::naive_conv2d(x, k, stride, pad, depthwise, b);
            CHECK(max_rel_err(y, e) < 1e-12);
        }
    }
    SUBCASE("errors") {
        Tensor x = Tensor::zeros({1, 1, 4, 4});
        Tensor k3 = Tensor::zeros({1, 1, 3, 3});
        CHECK_THROWS(conv2d(x, k3, {.stride = 0, .pad = 1, .depthwise = false}));
        Tensor k9 = Tensor::zeros({1, 1, 9, 9});
        CHECK_THROWS(conv2d(x, k9, {.stride = 1, .pad = 1, .depthwise = false}));
        Tensor k2 = Tensor::zeros({1, 1, 2, 2});
        CHECK_THROWS(conv2d(x, k2, {.stride = 1, .pad = 1, .depthwise = false}));
    }
}

TEST_CASE("layernorm statistics and gradient") {
    Rng rng(3);
    SUBCASE("zero input with zero offset stays zero") {
        Tensor x = Tensor::zeros({2, 4, 3, 3});
        Tensor y = layernorm_channels(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-6);
        for (double v : y.data()) CHECK(v == 0.0);
    }
    SUBCASE("unit gamma, zero beta normalizes each channel vector") {
        Tensor x = random_tensor({2, 8, 4, 4}, rng, -3.0, 3.0);
        Tensor y = layernorm_channels(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 1e-9);
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t i = 0; i < 4; ++i)
                for (int64_t j = 0; j < 4; ++j) {
                    double m = 0.0, v = 0.0;
                    for (int64_t c = 0; c < 8; ++c) m += y.at({n, c, i, j});
                    m /= 8.0;
                    for (int64_t c = 0; c < 8; ++c) {
                        double d = y.at({n, c, i, j}) - m;
                        v += d * d;
                    }
                    v /= 8.0;
                    CHECK(std::abs(m) < 1e-9);
                    CHECK(std::abs(v - 1.0) < 1e-6);
                }
    }
    SUBCASE("gradient matches central differences") {
        Tensor x = random_tensor({2, 5, 2, 2}, rng).set_requires_grad(true);
        Tensor g = random_tensor({5}, rng, 0.5, 1.5).set_requires_grad(true);
        Tensor b = random_tensor({5}, rng).set_requires_grad(true);
        auto fwd = [&] { return layernorm_channels(x, g, b, 1e-6); };
        CHECK(oracles::fd_gradcheck(fwd, x, 40, rng).worst_rel < 1e-5);
        CHECK(oracles::fd_gradcheck(fwd, g, 10, rng).worst_rel < 1e-5);
        CHECK(oracles::fd_gradcheck(fwd, b, 10, rng).worst_rel < 1e-5);
    }
    SUBCASE("eps must be positive") {
        Tensor x = Tensor::zeros({1, 2, 1, 1});
        CHECK_THROWS(layernorm_channels(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0));
    }
}

TEST_CASE("activation closed forms") {
    Tensor zero = Tensor::scalar(0.0);
    CHECK(silu(zero).item() == 0.0);
    CHECK(gelu(zero).item() == 0.0);
    CHECK(softplus(zero).item() == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    CHECK(silu(Tensor::scalar(1.0)).item() == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("structural ops are exact bijections") {
    Rng rng(4);
    SUBCASE("concat of split restores the input bit for bit") {
        for (int trial = 0; trial < 10; ++trial) {
            int64_t c = 2 * (1 + static_cast<int64_t>(rng.below(5)));
            Tensor x = random_tensor({2, c, 3, 2}, rng);
            CHECK(bit_equal(concat_channels(split_channels(x, 2)), x));
        }
    }
    SUBCASE("flip is an involution") {
        Tensor x = random_tensor({3, 2, 4, 5}, rng);
        CHECK(bit_equal(flip(flip(x, {0, 2}), {0, 2}), x));
    }
    SUBCASE("permute against its inverse") {
        Tensor x = random_tensor({2, 3, 4, 5}, rng);
        Tensor p = permute(x, {2, 0, 3, 1});
        // inverse of (2,0,3,1) is (1,3,0,2)
        CHECK(bit_equal(permute(p, {1, 3, 0, 2}), x));
    }
    SUBCASE("reshape round trip") {
        Tensor x = random_tensor({2, 3, 4}, rng);
        CHECK(bit_equal(reshape(reshape(x, {4, 6}), {2, 3, 4}), x));
    }
    SUBCASE("errors") {
        Tensor x = Tensor::zeros({1, 3, 2, 2});
        CHECK_THROWS(split_channels(x, 2));
        CHECK_THROWS(permute(x, {0, 1, 2, 7}));
        CHECK_THROWS(flip(x, {9}));
        CHECK_THROWS(narrow(x, 1, 2, 5));
    }
}

TEST_CASE("backward basics") {
    SUBCASE("grad of sum is one everywhere") {
        Tensor x = Tensor::full({3, 3}, 2.0).set_requires_grad(true);
        backward(sum(x));
        for (double g : x.grad()) CHECK(g == 1.0);
    }
    SUBCASE("grad of sum of squares at 3 is 6") {
        Tensor x = Tensor::scalar(3.0).set_requires_grad(true);
        backward(sum(mul(x, x)));
        CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
    }
    SUBCASE("grad accumulates across uses") {
        Tensor x = Tensor::scalar(1.5).set_requires_grad(true);
        Tensor y = add(mul(x, x), x); // y = x^2 + x, dy/dx = 2x + 1 = 4
        backward(y);
        CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
    }
    SUBCASE("composite network gradient vs central differences") {
        Rng rng(5);
        Tensor x = random_tensor({2, 6}, rng).set_requires_grad(true);
        Tensor w1 = random_tensor({6, 8}, rng).set_requires_grad(true);
        Tensor b1 = random_tensor({8}, rng).set_requires_grad(true);
        Tensor w2 = random_tensor({8, 4}, rng).set_requires_grad(true);
        auto fwd = [&] { return linear(silu(linear(x, w1, b1)), w2, Tensor()); };
        CHECK(oracles::fd_gradcheck(fwd, x, 30, rng).worst_rel < 1e-4);
        CHECK(oracles::fd_gradcheck(fwd, w1, 30, rng).worst_rel < 1e-4);
        CHECK(oracles::fd_gradcheck(fwd, b1, 8, rng).worst_rel < 1e-4);
        CHECK(oracles::fd_gradcheck(fwd, w2, 30, rng).worst_rel < 1e-4);
    }
    SUBCASE("backward requires a scalar") {
        Tensor x = Tensor::zeros({2, 2}).set_requires_grad(true);
        CHECK_THROWS(backward(add_scalar(x, 1.0)));
    }
}

TEST_CASE("forward ops reject non-finite values") {
    Tensor x = Tensor::from({2}, {1.0, std::numeric_limits<double>::infinity()});
    CHECK_THROWS(add_scalar(x, 1.0));
    Tensor big = Tensor::from({1}, {1e308});
    CHECK_THROWS(exp(mul_scalar(big, 2.0))); // wait: mul first overflows
}

TEST_CASE("rounding ops") {
    SUBCASE("ties away from zero") {
        Tensor x = Tensor::from({4}, {2.4, -1.5, 0.0, 2.5});
        Tensor y = plain_round(x);
        CHECK(y.data()[0] == 2.0);
        CHECK(y.data()[1] == -2.0);
        CHECK(y.data()[2] == 0.0);
        CHECK(y.data()[3] == 3.0);
    }
    SUBCASE("straight-through gradient is identity") {
        Tensor x = Tensor::from({3}, {0.2, 1.7, -0.6}).set_requires_grad(true);
        backward(sum(round_ste(x)));
        for (double g : x.grad()) CHECK(g == 1.0);
    }
    SUBCASE("plain rounding refuses to join a recording graph") {
        Tensor x = Tensor::scalar(0.4).set_requires_grad(true);
        CHECK_THROWS(plain_round(x));
        NoGradGuard ng;
        CHECK(plain_round(x).item() == 0.0);
    }
}

TEST_CASE("checkpoint round trip and determinism") {
    Rng rng(6);
    auto build = [&](ParamStore& store) {
        Rng r(42);
        store.add("b.second", oracles::random_tensor({3, 2}, r));
        store.add("a.first", oracles::random_tensor({4}, r));
        store.add("c.third", oracles::random_tensor({2, 2, 2}, r), false);
    };
    ParamStore s1;
    build(s1);
    std::string path = (std::filesystem::temp_directory_path() / "gtem_ckpt_test.bin").string();
    s1.save(path);

    ParamStore s2;
    build(s2);
    for (Parameter* p : s2.sorted())
        for (auto& v : p->value.raw()) v = 0.0;
    s2.load(path);
    for (Parameter* p : s1.sorted()) {
        const Parameter* q = s2.find(p->name);
        REQUIRE(q != nullptr);
        CHECK(bit_equal(p->value, q->value));
    }
    CHECK(s1.content_hash() == s2.content_hash());

    SUBCASE("serialized form is name-ordered and tagged") {
        auto bytes = s1.serialize();
        REQUIRE(bytes.size() > 13);
        CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "GTEMCKPT");
        // first record name is the lexicographically smallest
        uint16_t len;
        std::memcpy(&len, bytes.data() + 13, 2);
        CHECK(std::string(bytes.begin() + 15, bytes.begin() + 15 + len) == "a.first");
    }
    SUBCASE("unique names enforced") {
        ParamStore s;
        s.add("x", Tensor::zeros({1}));
        CHECK_THROWS(s.add("x", Tensor::zeros({1})));
    }
    SUBCASE("shape mismatch rejected") {
        ParamStore s;
        s.add("b.second", Tensor::zeros({3, 3})); // wrong shape
        s.add("a.first", Tensor::zeros({4}));
        s.add("c.third", Tensor::zeros({2, 2, 2}));
        CHECK_THROWS(s.load(path));
    }
    std::filesystem::remove(path);
}

TEST_CASE("property: random structural round-trips stay bit-identical") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Shape s = {1 + static_cast<int64_t>(rng.below(3)), 1 + static_cast<int64_t>(rng.below(4)),
                   1 + static_cast<int64_t>(rng.below(4)), 1 + static_cast<int64_t>(rng.below(4))};
        Tensor x = random_tensor(s, rng, -10.0, 10.0);
        std::vector<size_t> axes = {0, 1, 2, 3};
        for (size_t i = 3; i > 0; --i) std::swap(axes[i], axes[static_cast<size_t>(rng.below(i + 1))]);
        std::vector<size_t> inv(4);
        for (size_t i = 0; i < 4; ++i) inv[axes[i]] = i;
        CHECK(bit_equal(permute(permute(x, axes), inv), x));
        CHECK(bit_equal(flip(flip(x, {1, 3}), {3, 1}), x));
    }
}

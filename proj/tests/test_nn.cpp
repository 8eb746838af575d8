#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tmgan/nn.hpp"

using namespace tmgan;
using Catch::Approx;
using testutil::grad_rel_err;
using testutil::numeric_grad;
using testutil::random_tensor;
using testutil::to_vec;
using testutil::weighted_sum;

namespace {

// Shared scaffold: analytic gradient of sum(w * module(x)) vs central
// differences, for input and every parameter.
template <typename Fwd, typename Bwd>
void check_grads(Tensor& x, std::vector<Param*> params, Fwd fwd, Bwd bwd, real_t tol = 1e-6) {
    Tensor w = random_tensor(fwd().shape(), 99);
    auto loss = [&]() { return weighted_sum(fwd(), w); };

    Tensor y = fwd();
    for (Param* p : params) p->g.zero();
    Tensor gx = bwd(w);

    REQUIRE(grad_rel_err(to_vec(gx), numeric_grad(loss, x)) < tol);
    for (Param* p : params) {
        std::vector<real_t> analytic = to_vec(p->g);
        REQUIRE(grad_rel_err(analytic, numeric_grad(loss, p->v)) < tol);
    }
}

}  // namespace

TEST_CASE("conv2d matches finite differences", "[nn]") {
    Rng rng(42);
    SECTION("plain kernel along W") {
        Conv2d conv = Conv2d::along_w(3, 4, 5, 1, 1, rng);
        Tensor x = random_tensor({2, 3, 1, 8}, 1);
        check_grads(
            x, collect_params(conv), [&]() { return conv.forward(x, kInfer); },
            [&](const Tensor& w) {
                conv.forward(x, Ctx{true, true});
                return conv.backward(w);
            });
    }
    SECTION("strided grouped conv") {
        Conv2d conv = Conv2d::along_w(4, 8, 7, 4, 2, rng);
        Tensor x = random_tensor({1, 4, 1, 21}, 2);
        check_grads(
            x, collect_params(conv), [&]() { return conv.forward(x, kInfer); },
            [&](const Tensor& w) {
                conv.forward(x, Ctx{true, true});
                return conv.backward(w);
            });
    }
    SECTION("3x3 stride-2 2D conv") {
        Conv2d conv(2, 3, 3, 3, 2, 2, 1, 1, 1, true, rng);
        Tensor x = random_tensor({2, 2, 5, 7}, 3);
        check_grads(
            x, collect_params(conv), [&]() { return conv.forward(x, kInfer); },
            [&](const Tensor& w) {
                conv.forward(x, Ctx{true, true});
                return conv.backward(w);
            });
    }
    SECTION("output shape arithmetic") {
        Conv2d conv = Conv2d::along_w(1, 1, 15, 4, 1, rng);
        Tensor x({1, 1, 1, 64});
        REQUIRE(conv.forward(x, kInfer).dim(3) == (64 + 2 * 7 - 15) / 4 + 1);
    }
}

TEST_CASE("lstm matches finite differences", "[nn]") {
    Rng rng(7);
    Lstm lstm(3, 4, rng);
    Tensor x = random_tensor({5, 2, 3}, 11);
    Tensor h, c;
    check_grads(
        x, collect_params(lstm),
        [&]() {
            Tensor h0, c0;
            return lstm.forward(x, h0, c0, kInfer);
        },
        [&](const Tensor& w) {
            Tensor h0, c0;
            lstm.forward(x, h0, c0, Ctx{true, true});
            return lstm.backward(w);
        });
}

TEST_CASE("lstm streaming state equals batch processing", "[nn]") {
    Rng rng(8);
    Lstm lstm(3, 3, rng);
    Tensor x = random_tensor({6, 1, 3}, 12);
    Tensor h0, c0;
    Tensor full = lstm.forward(x, h0, c0, kInfer);

    Tensor h, c;
    for (int64_t t = 0; t < 6; ++t) {
        Tensor step({1, 1, 3});
        for (int64_t i = 0; i < 3; ++i) step[i] = x.at3(t, 0, i);
        Tensor y = lstm.forward(step, h, c, kInfer);
        for (int64_t i = 0; i < 3; ++i) REQUIRE(y[i] == full.at3(t, 0, i));
    }
}

TEST_CASE("batchnorm statistics and gradients", "[nn]") {
    Rng rng(21);
    BatchNorm bn(3);
    Tensor x = random_tensor({4, 3, 1, 6}, 31, 2.0);

    SECTION("training output is zero-mean unit-variance per channel") {
        Tensor y = bn.forward(x, Ctx{false, true});
        for (int64_t c = 0; c < 3; ++c) {
            real_t mean = 0, var = 0;
            int64_t n = 0;
            for (int64_t b = 0; b < 4; ++b)
                for (int64_t i = 0; i < 6; ++i) {
                    mean += y.at4(b, c, 0, i);
                    ++n;
                }
            mean /= n;
            for (int64_t b = 0; b < 4; ++b)
                for (int64_t i = 0; i < 6; ++i) {
                    real_t d = y.at4(b, c, 0, i) - mean;
                    var += d * d;
                }
            var /= n;
            REQUIRE(mean == Approx(0.0).margin(1e-10));
            REQUIRE(var == Approx(1.0).margin(1e-3));
        }
    }
    SECTION("gradient check in training mode") {
        check_grads(
            x, collect_params(bn), [&]() { return bn.forward(x, Ctx{false, true}); },
            [&](const Tensor& w) {
                bn.forward(x, Ctx{true, true});
                return bn.backward(w);
            },
            1e-5);
    }
    SECTION("eval mode is deterministic given running stats") {
        bn.forward(x, Ctx{false, true});
        Tensor y1 = bn.forward(x, Ctx{false, false});
        Tensor y2 = bn.forward(x, Ctx{false, false});
        REQUIRE(to_vec(y1) == to_vec(y2));
    }
}

TEST_CASE("prelu gradient", "[nn]") {
    PRelu act(3);
    Tensor x = random_tensor({2, 3, 1, 5}, 41);
    check_grads(
        x, collect_params(act), [&]() { return act.forward(x, kInfer); },
        [&](const Tensor& w) {
            act.forward(x, Ctx{true, true});
            return act.backward(w);
        });
}

TEST_CASE("pooling gradients", "[nn]") {
    SECTION("max pool halving") {
        MaxPoolHalf pool;
        Tensor x = random_tensor({2, 2, 1, 8}, 51);
        check_grads(
            x, {}, [&]() { return pool.forward(x, kInfer); },
            [&](const Tensor& w) {
                pool.forward(x, Ctx{true, true});
                return pool.backward(w);
            });
    }
    SECTION("avg pool k4 s2 p1") {
        AvgPoolW pool(4, 2, 1);
        Tensor x = random_tensor({1, 2, 1, 10}, 52);
        check_grads(
            x, {}, [&]() { return pool.forward(x, kInfer); },
            [&](const Tensor& w) {
                pool.forward(x, Ctx{true, true});
                return pool.backward(w);
            });
    }
}

TEST_CASE("subpixel shuffle rearranges channels into time", "[nn]") {
    SECTION("minimal example") {
        Tensor x({1, 2, 1, 1});
        x[0] = 3.5;  // channel a
        x[1] = -2.0; // channel b
        Tensor y = subpixel_shuffle(x, 2);
        REQUIRE(y.shape() == std::vector<int64_t>{1, 1, 1, 2});
        REQUIRE(y[0] == 3.5);
        REQUIRE(y[1] == -2.0);
    }
    SECTION("bijective: multiset preserved and inverse recovers input") {
        Tensor x = random_tensor({2, 6, 1, 4}, 61);
        Tensor y = subpixel_shuffle(x, 3);
        REQUIRE(y.shape() == std::vector<int64_t>{2, 2, 1, 12});
        std::vector<real_t> a = to_vec(x), b = to_vec(y);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        REQUIRE(a == b);
        Tensor back = subpixel_shuffle_backward(y, 3);
        REQUIRE(to_vec(back) == to_vec(x));
    }
}

TEST_CASE("orthogonal init produces orthogonal blocks", "[nn]") {
    Rng rng(71);
    Tensor w({4, 4});
    orthogonal_square(w.data(), 4, rng);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            real_t dot = 0;
            for (int64_t k = 0; k < 4; ++k) dot += w.at2(k, i) * w.at2(k, j);
            REQUIRE(dot == Approx(i == j ? 1.0 : 0.0).margin(1e-10));
        }
}

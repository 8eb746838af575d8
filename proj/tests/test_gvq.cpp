#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tmgan/gvq.hpp"

using namespace tmgan;
using Catch::Approx;
using testutil::grad_rel_err;
using testutil::numeric_grad;
using testutil::random_tensor;
using testutil::to_vec;
using testutil::weighted_sum;

namespace {

int64_t brute_force_nearest(const Codebook& cb, const real_t* z) {
    int64_t best = 0;
    real_t best_d = 0;
    for (int64_t v = 0; v < cb.size(); ++v) {
        real_t d = 0;
        for (int64_t c = 0; c < cb.dim(); ++c) {
            real_t diff = z[c] - cb.vectors().at2(v, c);
            d += diff * diff;
        }
        if (v == 0 || d < best_d) {
            best_d = d;
            best = v;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("quantize_nearest equals brute force", "[gvq]") {
    SECTION("vector equal to a codeword returns that codeword") {
        Codebook cb(16, 4, 7);
        Tensor z({4});
        for (int64_t c = 0; c < 4; ++c) z[c] = cb.vectors().at2(7, c);
        auto [q, idx] = quantize_nearest(cb, z);
        REQUIRE(idx == 7);
        for (int64_t c = 0; c < 4; ++c) REQUIRE(q[c] == cb.vectors().at2(7, c));
    }
    SECTION("exact ties break to the lowest index") {
        Codebook cb(8, 2, 3);
        // integer-valued codewords, exactly equidistant from z
        for (int64_t v = 0; v < 8; ++v)
            for (int64_t c = 0; c < 2; ++c) cb.vectors_mut().at2(v, c) = real_t(10 + v);
        cb.vectors_mut().at2(2, 0) = 0.0;
        cb.vectors_mut().at2(2, 1) = 1.0;
        cb.vectors_mut().at2(5, 0) = 2.0;
        cb.vectors_mut().at2(5, 1) = -1.0;
        cb.refresh_sq();
        Tensor z({2});
        z[0] = 1.0;
        z[1] = 0.0;  // dist^2 = 2 to both 2 and 5
        auto [q, idx] = quantize_nearest(cb, z);
        REQUIRE(idx == 2);
    }
    SECTION("random vectors against exhaustive scan over 512 codewords") {
        Codebook cb(512, 8, 11);
        Rng rng(12);
        for (int trial = 0; trial < 200; ++trial) {
            Tensor z({8});
            for (int64_t c = 0; c < 8; ++c) z[c] = 0.02 * rng.normal();
            auto [q, idx] = quantize_nearest(cb, z);
            REQUIRE(idx == brute_force_nearest(cb, z.data()));
        }
    }
    SECTION("non-finite input is rejected") {
        Codebook cb(4, 2, 1);
        Tensor z({2});
        z[0] = std::numeric_limits<real_t>::quiet_NaN();
        REQUIRE_THROWS_AS(quantize_nearest(cb, z), ParamError);
    }
}

TEST_CASE("gate_forward is a sigmoid gate", "[gvq]") {
    Rng rng(5);
    GatedVectorQuantizer q(3, 16, 9, rng);

    SECTION("zero conv weights and bias halve the input") {
        q.gate_conv().weight().v.zero();
        q.gate_conv().bias_param().v.zero();
        Tensor z = random_tensor({3, 2, 4}, 6);
        Tensor y = gate_forward(q, z);
        for (int64_t i = 0; i < z.numel(); ++i) REQUIRE(y[i] == Approx(z[i] / 2.0));
    }
    SECTION("zero input gives zero output") {
        Tensor z({3, 2, 4});
        Tensor y = gate_forward(q, z);
        REQUIRE(y.sumsq() == 0.0);
    }
    SECTION("gate never amplifies") {
        Tensor z = random_tensor({3, 2, 4}, 7);
        Tensor y = gate_forward(q, z);
        for (int64_t i = 0; i < z.numel(); ++i) REQUIRE(std::fabs(y[i]) <= std::fabs(z[i]));
    }
    SECTION("channel mismatch is a shape error") {
        Tensor z = random_tensor({2, 2, 4}, 8);
        REQUIRE_THROWS_AS(gate_forward(q, z), ShapeError);
    }
}

TEST_CASE("stack_forward residual cascade", "[gvq]") {
    Rng rng(15);

    SECTION("single stage with a codebook holding every gated column") {
        ResidualGVQStack stack(1, 2, 8, 0.25, 21, rng);
        Tensor z = random_tensor({2, 2, 2}, 22);  // [d=2, F=2, N'=2] -> 4 columns
        // feed once to get the gated features, then plant them as codewords
        Tensor g1 = gate_forward(stack.stage(0), z);
        Codebook& cb = stack.stage(0).codebook();
        for (int64_t v = 0; v < 8; ++v)
            for (int64_t c = 0; c < 2; ++c) cb.vectors_mut().at2(v, c) = 100.0 + v;
        int64_t col = 0;
        for (int64_t f = 0; f < 2; ++f)
            for (int64_t n = 0; n < 2; ++n, ++col)
                for (int64_t c = 0; c < 2; ++c)
                    cb.vectors_mut().at2(col, c) = g1.at3(c, f, n);
        cb.refresh_sq();
        cb.mark_data_initialized(true);
        StackForwardResult res = stack_forward(stack, z, false);
        REQUIRE(res.aux_loss == Approx(0.0).margin(1e-20));
        REQUIRE(grad_rel_err(to_vec(res.zq), to_vec(g1)) < 1e-12);
    }

    SECTION("three stages, zero input, zero vector in every codebook") {
        ResidualGVQStack stack(3, 2, 8, 0.25, 31, rng);
        for (int64_t s = 0; s < 3; ++s) {
            Codebook& cb = stack.stage(s).codebook();
            for (int64_t v = 0; v < 8; ++v)
                for (int64_t c = 0; c < 2; ++c) cb.vectors_mut().at2(v, c) = real_t(1 + v);
            cb.vectors_mut().at2(3, 0) = 0.0;
            cb.vectors_mut().at2(3, 1) = 0.0;
            cb.refresh_sq();
            cb.mark_data_initialized(true);
        }
        Tensor z({2, 2, 3});
        StackForwardResult res = stack_forward(stack, z, false);
        REQUIRE(res.zq.sumsq() == 0.0);
        for (const auto& stage : res.indices.stage)
            for (int32_t idx : stage) REQUIRE(idx == 3);
    }

    SECTION("stage-2 refinement improves reconstruction on fitted data") {
        // Monte-Carlo: after EMA fitting on Gaussian data, two stages beat one.
        ResidualGVQStack stack(2, 4, 32, 0.25, 41, rng);
        Rng data_rng(42);
        Ctx train{false, true};
        for (int step = 0; step < 120; ++step) {
            Tensor z = random_tensor({8, 4, 1, 4}, data_rng.u64());
            stack.forward(z, train);
        }
        int better = 0, trials = 300;
        Rng eval_rng(43);
        for (int t = 0; t < trials; ++t) {
            Tensor z = random_tensor({1, 4, 1, 1}, eval_rng.u64());
            Ctx infer{false, false};
            Tensor g1 = stack.stage(0).gate_forward(z, infer);
            std::vector<real_t> col(4);
            for (int64_t c = 0; c < 4; ++c) col[size_t(c)] = g1[c];
            int32_t i1;
            stack.stage(0).codebook().quantize_rows(col.data(), 1, &i1);
            real_t e1 = 0, e2 = 0;
            std::vector<real_t> resid(4);
            for (int64_t c = 0; c < 4; ++c) {
                real_t q1 = stack.stage(0).codebook().vectors().at2(i1, c);
                resid[size_t(c)] = col[size_t(c)] - q1;
                e1 += resid[size_t(c)] * resid[size_t(c)];
            }
            int32_t i2;
            stack.stage(1).codebook().quantize_rows(resid.data(), 1, &i2);
            for (int64_t c = 0; c < 4; ++c) {
                real_t d = resid[size_t(c)] - stack.stage(1).codebook().vectors().at2(i2, c);
                e2 += d * d;
            }
            if (e2 <= e1) ++better;
        }
        REQUIRE(real_t(better) / trials >= 0.95);
    }
}

TEST_CASE("ema_update converges and stays finite", "[gvq]") {
    SECTION("single cluster converges to the repeated vector") {
        Codebook cb(4, 3, 51);
        std::vector<real_t> u = {0.4, -0.2, 0.9};
        std::vector<real_t> rows(3);
        for (int step = 0; step < 200; ++step) {
            std::copy(u.begin(), u.end(), rows.begin());
            int32_t idx;
            cb.quantize_rows(rows.data(), 1, &idx);
            cb.ema_update(rows.data(), 1, &idx);
        }
        int32_t idx;
        cb.quantize_rows(u.data(), 1, &idx);
        for (int64_t c = 0; c < 3; ++c)
            REQUIRE(cb.vectors().at2(idx, c) == Approx(u[size_t(c)]).margin(1e-3));
    }
    SECTION("no assignments leaves codewords unchanged up to smoothing") {
        Codebook cb(4, 2, 52);
        Tensor before = cb.vectors();
        cb.ema_update(nullptr, 0, nullptr);
        for (int64_t i = 0; i < before.numel(); ++i)
            REQUIRE(cb.vectors()[i] == Approx(before[i]).margin(1e-4));
    }
    SECTION("two separated clusters match the k-means oracle") {
        Codebook cb(2, 2, 53);
        std::vector<real_t> mu1 = {5.0, 5.0}, mu2 = {-5.0, -5.0};
        Rng rng(54);
        // seed the codebook from data
        std::vector<real_t> init = {mu1[0] + rng.normal(), mu1[1] + rng.normal(),
                                    mu2[0] + rng.normal(), mu2[1] + rng.normal()};
        cb.init_from_data(init.data(), 2, 55);
        std::vector<real_t> sum1 = {0, 0}, sum2 = {0, 0};
        int64_t n1 = 0, n2 = 0;
        for (int step = 0; step < 300; ++step) {
            std::vector<real_t> rows(2 * 16);
            std::vector<int32_t> idx(16);
            for (int i = 0; i < 16; ++i) {
                bool first = (i % 2) == 0;
                const std::vector<real_t>& mu = first ? mu1 : mu2;
                rows[size_t(2 * i)] = mu[0] + 0.3 * rng.normal();
                rows[size_t(2 * i + 1)] = mu[1] + 0.3 * rng.normal();
                // oracle: running means of the true assignments
                if (first) {
                    sum1[0] += rows[size_t(2 * i)];
                    sum1[1] += rows[size_t(2 * i + 1)];
                    ++n1;
                } else {
                    sum2[0] += rows[size_t(2 * i)];
                    sum2[1] += rows[size_t(2 * i + 1)];
                    ++n2;
                }
            }
            cb.quantize_rows(rows.data(), 16, idx.data());
            cb.ema_update(rows.data(), 16, idx.data());
        }
        real_t spacing = std::hypot(mu1[0] - mu2[0], mu1[1] - mu2[1]);
        std::vector<std::vector<real_t>> oracle = {{sum1[0] / n1, sum1[1] / n1},
                                                   {sum2[0] / n2, sum2[1] / n2}};
        for (const auto& target : oracle) {
            real_t best = 1e30;
            for (int64_t v = 0; v < 2; ++v)
                best = std::min(best, std::hypot(cb.vectors().at2(v, 0) - target[0],
                                                 cb.vectors().at2(v, 1) - target[1]));
            REQUIRE(best < 0.05 * spacing);
        }
        for (int64_t i = 0; i < cb.ema_counts().numel(); ++i)
            REQUIRE(cb.ema_counts()[i] >= 0.0);
    }
}

TEST_CASE("straight-through gradient matches the identity-bypass network", "[gvq]") {
    Rng rng(61);
    ResidualGVQStack stack(2, 3, 16, 0.25, 62, rng);
    // initialize codebooks deterministically from one batch
    Tensor warm = random_tensor({2, 3, 1, 4}, 63);
    stack.forward(warm, Ctx{false, true});

    Tensor z = random_tensor({2, 3, 1, 4}, 64);
    Tensor w = random_tensor({2, 3, 1, 4}, 65);

    // analytic: straight-through backward of the real stack (task term only)
    Ctx infer{true, false};
    stack.forward(z, infer);
    Tensor gz = stack.backward(w, /*aux_scale=*/0.0);

    // numeric: finite differences of the bypass network (quantize == id)
    auto loss = [&]() {
        auto res = stack.forward(z, Ctx{false, false}, /*bypass=*/true);
        return weighted_sum(res.zq, w);
    };
    REQUIRE(grad_rel_err(to_vec(gz), numeric_grad(loss, z)) < 1e-3);
}

TEST_CASE("aux loss semantics", "[gvq]") {
    Rng rng(71);
    ResidualGVQStack stack(2, 2, 8, 0.25, 72, rng);
    Tensor warm = random_tensor({2, 2, 1, 3}, 73);
    stack.forward(warm, Ctx{false, true});
    Tensor z = random_tensor({2, 2, 1, 3}, 74);
    auto res = stack.forward(z, Ctx{false, false});
    REQUIRE(res.aux_loss >= 0.0);
}

TEST_CASE("inference never mutates codebooks", "[gvq]") {
    Rng rng(81);
    ResidualGVQStack stack(3, 2, 8, 0.25, 82, rng);
    Tensor warm = random_tensor({2, 2, 1, 3}, 83);
    stack.forward(warm, Ctx{false, true});

    std::vector<std::vector<real_t>> before;
    for (int64_t s = 0; s < 3; ++s) {
        before.push_back(to_vec(stack.stage(s).codebook().vectors()));
        before.push_back(to_vec(stack.stage(s).codebook().ema_counts()));
        before.push_back(to_vec(stack.stage(s).codebook().ema_sums()));
    }
    Tensor z = random_tensor({4, 2, 1, 3}, 84);
    stack.forward(z, Ctx{false, false});
    size_t k = 0;
    for (int64_t s = 0; s < 3; ++s) {
        REQUIRE(to_vec(stack.stage(s).codebook().vectors()) == before[k++]);
        REQUIRE(to_vec(stack.stage(s).codebook().ema_counts()) == before[k++]);
        REQUIRE(to_vec(stack.stage(s).codebook().ema_sums()) == before[k++]);
    }
}

TEST_CASE("index grids dump as text", "[gvq]") {
    StackIndices idx;
    idx.rows = 2;
    idx.cols = 3;
    idx.stage = {{0, 1, 2, 3, 4, 5}};
    std::ostringstream os;
    idx.dump(os);
    REQUIRE(os.str() == "stage 0\n0 1 2\n3 4 5\n");
}

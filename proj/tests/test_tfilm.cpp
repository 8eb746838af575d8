#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tmgan/tfilm.hpp"

using namespace tmgan;
using Catch::Approx;
using testutil::grad_rel_err;
using testutil::numeric_grad;
using testutil::random_tensor;
using testutil::to_vec;
using testutil::weighted_sum;

namespace {

// Independent recurrence oracle: pool + LSTM cell + product, all computed
// with plain loops against the layer's own weights.
Tensor tfilm_oracle(const Tensor& y_cfn, const Tensor& w_ih, const Tensor& w_hh,
                    const Tensor& bias) {
    int64_t C = y_cfn.dim(0), F = y_cfn.dim(1), N = y_cfn.dim(2);
    std::vector<real_t> h(size_t(C), 0.0), c(size_t(C), 0.0);
    Tensor out(y_cfn.shape());
    for (int64_t f = 0; f < F; ++f) {
        std::vector<real_t> pool(size_t(C), 0.0);
        for (int64_t ch = 0; ch < C; ++ch) {
            real_t m = y_cfn.at3(ch, f, 0);
            for (int64_t n = 1; n < N; ++n) m = std::max(m, y_cfn.at3(ch, f, n));
            pool[size_t(ch)] = m;
        }
        std::vector<real_t> hn(size_t(C)), cn(size_t(C));
        for (int64_t u = 0; u < C; ++u) {
            real_t a[4];
            for (int g = 0; g < 4; ++g) {
                real_t acc = bias[g * C + u];
                for (int64_t k = 0; k < C; ++k) {
                    acc += w_ih.at2(g * C + u, k) * pool[size_t(k)];
                    acc += w_hh.at2(g * C + u, k) * h[size_t(k)];
                }
                a[g] = acc;
            }
            real_t ig = 1.0 / (1.0 + std::exp(-a[0]));
            real_t fg = 1.0 / (1.0 + std::exp(-a[1]));
            real_t gg = std::tanh(a[2]);
            real_t og = 1.0 / (1.0 + std::exp(-a[3]));
            cn[size_t(u)] = fg * c[size_t(u)] + ig * gg;
            hn[size_t(u)] = og * std::tanh(cn[size_t(u)]);
        }
        h = hn;
        c = cn;
        for (int64_t ch = 0; ch < C; ++ch)
            for (int64_t n = 0; n < N; ++n)
                out.at3(ch, f, n) = h[size_t(ch)] * y_cfn.at3(ch, f, n);
    }
    return out;
}

}  // namespace

TEST_CASE("tfilm forward matches a hand recurrence oracle", "[tfilm]") {
    Rng rng(3);
    TFiLM layer(1, rng);
    Tensor y = random_tensor({1, 2, 3}, 5);

    // extract this layer's LSTM weights through the visitor
    Tensor w_ih, w_hh, bias;
    layer.visit(
        "t",
        [&](const std::string& name, Param& p) {
            if (name.ends_with("w_ih")) w_ih = p.v;
            if (name.ends_with("w_hh")) w_hh = p.v;
            if (name.ends_with(".b")) bias = p.v;
        },
        [](const std::string&, Tensor&) {});
    REQUIRE(w_ih.numel() == 4);

    Tensor expected = tfilm_oracle(y, w_ih, w_hh, bias);
    Tensor got = tfilm_forward(layer, y);
    REQUIRE(grad_rel_err(to_vec(got), to_vec(expected)) < 1e-12);
}

TEST_CASE("tfilm preserves shape and pools only the within-frame axis", "[tfilm]") {
    Rng rng(9);
    TFiLM layer(3, rng);
    Tensor y = random_tensor({3, 5, 7}, 6);
    Tensor out = tfilm_forward(layer, y);
    REQUIRE(out.shape() == y.shape());

    SECTION("within-frame permutation permutes the output identically") {
        Tensor yp = y;
        // reverse each frame along n
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t f = 0; f < 5; ++f)
                for (int64_t n = 0; n < 7; ++n) yp.at3(c, f, n) = y.at3(c, f, 6 - n);
        Tensor outp = tfilm_forward(layer, yp);
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t f = 0; f < 5; ++f)
                for (int64_t n = 0; n < 7; ++n)
                    REQUIRE(outp.at3(c, f, n) == out.at3(c, f, 6 - n));
    }
    SECTION("constant input pools to the constant") {
        Tensor yc({3, 4, 5});
        yc.fill(0.75);
        // against the oracle path: gains of constant-pool sequence apply to all n equally
        Tensor outc = tfilm_forward(layer, yc);
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t f = 0; f < 4; ++f)
                for (int64_t n = 1; n < 5; ++n)
                    REQUIRE(outc.at3(c, f, n) == Approx(outc.at3(c, f, 0)));
    }
}

TEST_CASE("tfilm_step reproduces the batch forward", "[tfilm]") {
    Rng rng(13);
    TFiLM layer(2, rng);
    Tensor y = random_tensor({2, 4, 5}, 14);
    Tensor batch = tfilm_forward(layer, y);

    TFiLMState st;
    for (int64_t f = 0; f < 4; ++f) {
        Tensor frame({2, 1, 5});
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t n = 0; n < 5; ++n) frame.at3(c, 0, n) = y.at3(c, f, n);
        Tensor out = tfilm_step(layer, st, frame);
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t n = 0; n < 5; ++n) REQUIRE(out.at3(c, 0, n) == batch.at3(c, f, n));
    }

    SECTION("zero state, zero input gives zero output") {
        TFiLMState zero_st;
        Tensor z({2, 1, 5});
        Tensor out = tfilm_step(layer, zero_st, z);
        REQUIRE(out.sumsq() == 0.0);
    }
}

TEST_CASE("tfilm state serialization preserves outputs", "[tfilm]") {
    Rng rng(23);
    TFiLM layer(2, rng);
    Tensor y = random_tensor({2, 6, 4}, 24);

    TFiLMState st;
    Tensor frame({2, 1, 4});
    for (int64_t f = 0; f < 3; ++f) {
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t n = 0; n < 4; ++n) frame.at3(c, 0, n) = y.at3(c, f, n);
        tfilm_step(layer, st, frame);
    }
    std::vector<real_t> blob;
    st.serialize(blob);
    size_t pos = 0;
    TFiLMState restored = TFiLMState::deserialize(blob, pos, 1, 2);

    for (int64_t f = 3; f < 6; ++f) {
        Tensor fr({2, 1, 4});
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t n = 0; n < 4; ++n) fr.at3(c, 0, n) = y.at3(c, f, n);
        Tensor a = tfilm_step(layer, st, fr);
        Tensor b = tfilm_step(layer, restored, fr);
        REQUIRE(to_vec(a) == to_vec(b));
    }
}

TEST_CASE("tfilm is causal over frames", "[tfilm]") {
    Rng rng(33);
    TFiLM layer(2, rng);
    Tensor y = random_tensor({2, 6, 3}, 34);
    Tensor base = tfilm_forward(layer, y);
    Tensor yp = y;
    yp.at3(1, 4, 2) += 0.5;  // perturb frame 4
    Tensor pert = tfilm_forward(layer, yp);
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t f = 0; f < 4; ++f)
            for (int64_t n = 0; n < 3; ++n) REQUIRE(pert.at3(c, f, n) == base.at3(c, f, n));
    // and the perturbed frame itself does change
    REQUIRE(to_vec(pert) != to_vec(base));
}

TEST_CASE("tfilm gradient agrees with finite differences", "[tfilm]") {
    Rng rng(43);
    TFiLM layer(2, rng);
    Tensor x = random_tensor({2 * 3, 2, 1, 4}, 44);  // frame-major [B*F, C, 1, N], B=2
    Tensor w = random_tensor({2 * 3, 2, 1, 4}, 45);

    auto loss = [&]() {
        TFiLMState st;
        return weighted_sum(layer.forward(x, 2, 3, st, kInfer), w);
    };
    TFiLMState st;
    layer.forward(x, 2, 3, st, Ctx{true, true});
    Tensor gx = layer.backward(w);
    REQUIRE(grad_rel_err(to_vec(gx), numeric_grad(loss, x)) < 1e-3);

    for (Param* p : collect_params(layer)) {
        p->g.zero();
    }
    TFiLMState st2;
    layer.forward(x, 2, 3, st2, Ctx{true, true});
    layer.backward(w);
    for (Param* p : collect_params(layer)) {
        REQUIRE(grad_rel_err(to_vec(p->g), numeric_grad(loss, p->v)) < 1e-3);
    }
}

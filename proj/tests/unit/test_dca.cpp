#include <doctest.h>

#include "helpers.hpp"
#include "trex/model/model.hpp"
#include "trex/nn/grad_check.hpp"
#include "trex/nn/ops.hpp"

#include <cmath>

using namespace trex;
using model::StageFeatures;
using nn::Tensor;
using test::random_tensor;

namespace {

StageFeatures<double> features(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng)
{
    return {h, w, c, random_tensor({h, w, c}, rng)};
}

struct DcaParams {
    model::ParamStore<double> store;
    model::AttentionParams<double> res, fup;
    model::LayerNormParams<double> ln_res, ln_fup;

    DcaParams(std::size_t c, std::size_t heads, bool shared, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        res = model::AttentionParams<double>::create(store, "res", c, heads, rng);
        fup = shared ? res : model::AttentionParams<double>::create(store, "fup", c, heads, rng);
        ln_res = model::LayerNormParams<double>::create(store, "ln_res", c);
        ln_fup = shared ? ln_res : model::LayerNormParams<double>::create(store, "ln_fup", c);
        for (const auto& [name, t] : store.items()) {
            auto copy = t;
            test::copy_values(copy, random_tensor(t.shape(), rng, 0.5));
        }
    }
};

model::FusionHead<double> head_of(const model::ParamStore<double>& store)
{
    model::FusionHead<double> h;
    h.fc1_w = store.get("head.fc1.weight");
    h.fc1_b = store.get("head.fc1.bias");
    h.fc2_w = store.get("head.fc2.weight");
    h.fc2_b = store.get("head.fc2.bias");
    return h;
}

model::ModelConfig small_config(model::ModelKind kind)
{
    model::ModelConfig cfg;
    cfg.kind = kind;
    cfg.encoder.input_h = cfg.encoder.input_w = 32;
    cfg.encoder.patch = 2;
    cfg.encoder.depths = {1, 1, 1, 1};
    cfg.encoder.dims = {8, 16, 32, 64};
    cfg.encoder.heads = {1, 2, 4, 8};
    cfg.encoder.mlp_ratio = 2;
    cfg.head_hidden = 16;
    return cfg;
}

// Brute-force scalar recomputation of one DCA direction plus fusion for a tiny grid.
std::vector<double> brute_h(const std::vector<double>& fq, const std::vector<double>& fkv, std::size_t n,
                            std::size_t c, std::size_t heads, const model::AttentionParams<double>& p,
                            const model::LayerNormParams<double>& ln)
{
    auto project = [&](const std::vector<double>& f, const Tensor<double>& w) {
        std::vector<double> out(n * c, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
                for (std::size_t k = 0; k < c; ++k) out[i * c + j] += f[i * c + k] * w.at(k * c + j);
        return out;
    };
    const auto q = project(fq, p.wq), k = project(fkv, p.wk), v = project(fkv, p.wv);
    const std::size_t dh = c / heads;
    std::vector<double> ca(n * c, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> s(n);
            double mx = -1e300;
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0;
                for (std::size_t d = 0; d < dh; ++d) dot += q[i * c + h * dh + d] * k[j * c + h * dh + d];
                s[j] = dot / std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, s[j]);
            }
            double z = 0;
            for (auto& x : s) z += (x = std::exp(x - mx));
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t d = 0; d < dh; ++d) ca[i * c + h * dh + d] += s[j] / z * v[j * c + h * dh + d];
        }
    }
    std::vector<double> out(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> prod(c);
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < c; ++j) mean += (prod[j] = fq[i * c + j] * ca[i * c + j]) / c;
        for (double x : prod) var += (x - mean) * (x - mean) / c;
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = (prod[j] - mean) / std::sqrt(var + ln.eps) * ln.gamma.at(j) + ln.beta.at(j);
    }
    return out;
}

std::vector<double> vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_SUITE("dca-fusion") {

TEST_CASE("identical inputs: cross-attention equals self-attention")
{
    DcaParams p(16, 8, false, 1);
    std::mt19937_64 rng(2);
    auto f = features(2, 2, 16, rng);
    auto dca = model::dual_cross_attention(f, f, p.res, p.fup, p.ln_res, p.ln_fup);
    auto self = model::multi_head_cross_attention(nn::reshape(f.tensor, {4, 16}), nn::reshape(f.tensor, {4, 16}), p.res);
    for (std::size_t i = 0; i < self.output.numel(); ++i) CHECK(dca.ca_res.at(i) == doctest::Approx(self.output.at(i)).epsilon(1e-12));
}

TEST_CASE("permuting follow-up tokens leaves each restaging query's output unchanged")
{
    DcaParams p(16, 8, false, 3);
    std::mt19937_64 rng(4);
    auto fr = features(2, 2, 16, rng);
    auto ff = features(2, 2, 16, rng);
    const std::size_t perm[4] = {2, 0, 3, 1};
    std::vector<double> permuted(64);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < 16; ++c) permuted[t * 16 + c] = ff.tensor.at(perm[t] * 16 + c);
    StageFeatures<double> ff2{2, 2, 16, Tensor<double>({2, 2, 16}, permuted)};
    auto a = model::dual_cross_attention(fr, ff, p.res, p.fup, p.ln_res, p.ln_fup);
    auto b = model::dual_cross_attention(fr, ff2, p.res, p.fup, p.ln_res, p.ln_fup);
    for (std::size_t i = 0; i < a.ca_res.numel(); ++i) CHECK(b.ca_res.at(i) == doctest::Approx(a.ca_res.at(i)).epsilon(1e-12));
    for (std::size_t i = 0; i < a.h_res.tensor.numel(); ++i)
        CHECK(b.h_res.tensor.at(i) == doctest::Approx(a.h_res.tensor.at(i)).epsilon(1e-12));
}

TEST_CASE("2x1 grid with C=8 matches a brute-force recomputation of both directions")
{
    for (std::size_t heads : {1u, 2u, 8u}) {
        DcaParams p(8, heads, false, 10 + heads);
        std::mt19937_64 rng(5);
        auto fr = features(2, 1, 8, rng);
        auto ff = features(2, 1, 8, rng);
        auto dca = model::dual_cross_attention(fr, ff, p.res, p.fup, p.ln_res, p.ln_fup);
        const auto want_res = brute_h(vec(fr.tensor), vec(ff.tensor), 2, 8, heads, p.res, p.ln_res);
        const auto want_fup = brute_h(vec(ff.tensor), vec(fr.tensor), 2, 8, heads, p.fup, p.ln_fup);
        CHECK(dca.h_res.tensor.shape() == nn::Shape{2, 1, 8});
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(dca.h_res.tensor.at(i) == doctest::Approx(want_res[i]).epsilon(1e-10));
            CHECK(dca.h_fup.tensor.at(i) == doctest::Approx(want_fup[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("both attention maps are produced, row-stochastic, and not transposes of each other")
{
    DcaParams p(16, 8, false, 6);
    std::mt19937_64 rng(7);
    auto fr = features(2, 2, 16, rng);
    auto ff = features(2, 2, 16, rng);
    auto dca = model::dual_cross_attention(fr, ff, p.res, p.fup, p.ln_res, p.ln_fup);
    REQUIRE(dca.attn_res2fup.shape() == nn::Shape{8, 4, 4});
    REQUIRE(dca.attn_fup2res.shape() == nn::Shape{8, 4, 4});
    for (const auto* a : {&dca.attn_res2fup, &dca.attn_fup2res}) {
        for (std::size_t row = 0; row < 32; ++row) {
            double s = 0;
            for (std::size_t j = 0; j < 4; ++j) s += a->at(row * 4 + j);
            CHECK(std::abs(s - 1.0) <= 1e-6);
        }
    }
    double max_diff = 0;
    for (std::size_t h = 0; h < 8; ++h)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                max_diff = std::max(max_diff, std::abs(dca.attn_res2fup.at((h * 4 + i) * 4 + j) -
                                                       dca.attn_fup2res.at((h * 4 + j) * 4 + i)));
    CHECK(max_diff > 1e-3);
}

TEST_CASE("shared projections and identical inputs give identical fused features")
{
    DcaParams p(16, 8, true, 8);
    std::mt19937_64 rng(9);
    auto f = features(2, 2, 16, rng);
    auto dca = model::dual_cross_attention(f, f, p.res, p.fup, p.ln_res, p.ln_fup);
    for (std::size_t i = 0; i < dca.h_res.tensor.numel(); ++i) CHECK(dca.h_res.tensor.at(i) == dca.h_fup.tensor.at(i));
}

TEST_CASE("dual cross-attention rejects mismatched grids")
{
    DcaParams p(16, 8, false, 1);
    std::mt19937_64 rng(1);
    auto a = features(2, 2, 16, rng);
    auto b = features(1, 2, 16, rng);
    CHECK_THROWS_AS(model::dual_cross_attention(a, b, p.res, p.fup, p.ln_res, p.ln_fup), nn::DimensionError);
}

TEST_CASE("head input widths: TREX 3C+1, CAT 2C, SI C")
{
    model::ModelConfig cfg;
    REQUIRE(cfg.encoder.stage4_channels() == 128);
    cfg.kind = model::ModelKind::Trex;
    CHECK(cfg.head_input_width() == 3 * 128 + 1);
    CHECK(cfg.head_input_width() == 385);
    cfg.kind = model::ModelKind::Cat;
    CHECK(cfg.head_input_width() == 256);
    cfg.kind = model::ModelKind::Si;
    CHECK(cfg.head_input_width() == 128);

    for (auto kind : {model::ModelKind::Trex, model::ModelKind::Cat, model::ModelKind::Si}) {
        cfg.kind = kind;
        model::PairModel<float> m(cfg, 1);
        CHECK(m.params().get("head.fc1.weight").dim(0) == cfg.head_input_width());
    }
}

TEST_CASE("trex_classify: softmax probabilities and sensitivity to the time gap")
{
    std::mt19937_64 rng(11);
    model::ParamStore<double> store;
    auto head = model::FusionHead<double>::create(store, "head", 3 * 8 + 1, 6, 0.1, rng);
    test::copy_values(head.fc1_w, random_tensor(head.fc1_w.shape(), rng, 0.5));
    test::copy_values(head.fc2_w, random_tensor(head.fc2_w.shape(), rng, 0.5));
    auto hr = features(2, 2, 8, rng), hf = features(2, 2, 8, rng), ff = features(2, 2, 8, rng);
    auto z0 = model::trex_classify(hr, hf, ff, 0.0, head);
    auto z1 = model::trex_classify(hr, hf, ff, 1.0, head);
    REQUIRE(z0.numel() == 2);
    for (const auto& z : {z0, z1}) {
        auto p = nn::softmax(z, 0);
        CHECK(p.at(0) + p.at(1) == doctest::Approx(1.0));
        CHECK(p.at(0) > 0.0);
        CHECK(p.at(0) < 1.0);
    }
    CHECK((z0.at(0) != z1.at(0) || z0.at(1) != z1.at(1)));

    // Zeroing the Δt row of the first layer removes the dependence.
    auto w = head.fc1_w.mutable_values();
    for (std::size_t j = 0; j < 6; ++j) w[(3 * 8) * 6 + j] = 0.0;
    auto y0 = model::trex_classify(hr, hf, ff, 0.0, head);
    auto y1 = model::trex_classify(hr, hf, ff, 1.0, head);
    CHECK(y0.at(0) == y1.at(0));
    CHECK(y0.at(1) == y1.at(1));

    CHECK_THROWS_AS(model::trex_classify(hr, hf, ff, 1.5, head), model::ContractError);
    CHECK_THROWS_AS(model::trex_classify(hr, hf, ff, -0.1, head), model::ContractError);
}

TEST_CASE("trex_classify concatenates pooled H_res, H_fup, F_fup and the time gap")
{
    std::mt19937_64 rng(12);
    model::ParamStore<double> store;
    auto head = model::FusionHead<double>::create(store, "head", 3 * 4 + 1, 5, 0.0, rng);
    test::copy_values(head.fc1_w, random_tensor(head.fc1_w.shape(), rng));
    auto hr = features(2, 2, 4, rng), hf = features(2, 2, 4, rng), ff = features(2, 2, 4, rng);
    const double dt = 0.37;
    auto z = model::trex_classify(hr, hf, ff, dt, head);

    std::vector<double> in;
    for (const auto* f : {&hr, &hf, &ff})
        for (std::size_t c = 0; c < 4; ++c) {
            double m = 0;
            for (std::size_t t = 0; t < 4; ++t) m += f->tensor.at(t * 4 + c) / 4;
            in.push_back(m);
        }
    in.push_back(dt);
    std::vector<double> hidden(5);
    for (std::size_t j = 0; j < 5; ++j) {
        double s = head.fc1_b.at(j);
        for (std::size_t i = 0; i < 13; ++i) s += in[i] * head.fc1_w.at(i * 5 + j);
        hidden[j] = std::max(0.0, s);
    }
    for (std::size_t k = 0; k < 2; ++k) {
        double s = head.fc2_b.at(k);
        for (std::size_t j = 0; j < 5; ++j) s += hidden[j] * head.fc2_w.at(j * 2 + k);
        CHECK(z.at(k) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("cat_classify is order sensitive and si_classify is pure")
{
    std::mt19937_64 rng(13);
    model::ParamStore<double> store;
    auto cat_head = model::FusionHead<double>::create(store, "cat", 16, 8, 0.1, rng);
    auto si_head = model::FusionHead<double>::create(store, "si", 8, 8, 0.1, rng);
    for (auto* w : {&cat_head.fc1_w, &cat_head.fc2_w, &si_head.fc1_w, &si_head.fc2_w})
        test::copy_values(*w, random_tensor(w->shape(), rng, 0.5));
    auto a = features(2, 2, 8, rng), b = features(2, 2, 8, rng);
    auto ab = model::cat_classify(a, b, cat_head);
    auto ba = model::cat_classify(b, a, cat_head);
    CHECK((ab.at(0) != ba.at(0) || ab.at(1) != ba.at(1)));
    CHECK_THROWS(model::cat_classify(a, b, si_head));

    auto s1 = model::si_classify(a, si_head);
    auto s2 = model::si_classify(a, si_head);
    CHECK(s1.at(0) == s2.at(0));
    CHECK(s1.at(1) == s2.at(1));
    CHECK_THROWS(model::si_classify(a, cat_head));
}

TEST_CASE("heads pass grad_check")
{
    std::mt19937_64 rng(14);
    model::ParamStore<double> store;
    auto head = model::FusionHead<double>::create(store, "h", 3 * 8 + 1, 6, 0.1, rng);
    for (auto* w : {&head.fc1_w, &head.fc1_b, &head.fc2_w, &head.fc2_b}) test::copy_values(*w, random_tensor(w->shape(), rng, 0.5));
    auto hr = features(2, 2, 8, rng), hf = features(2, 2, 8, rng), ff = features(2, 2, 8, rng);
    auto trex_op = [&](const std::vector<Tensor<double>>& in) {
        return model::trex_classify(StageFeatures<double>{2, 2, 8, in[0]}, StageFeatures<double>{2, 2, 8, in[1]},
                                    StageFeatures<double>{2, 2, 8, in[2]}, 0.4, head);
    };
    CHECK(nn::grad_check(trex_op, {hr.tensor, hf.tensor, ff.tensor, head.fc1_w, head.fc1_b, head.fc2_w, head.fc2_b}) < 1e-4);

    auto cat_head = model::FusionHead<double>::create(store, "c", 16, 6, 0.1, rng);
    for (auto* w : {&cat_head.fc1_w, &cat_head.fc2_w}) test::copy_values(*w, random_tensor(w->shape(), rng, 0.5));
    auto cat_op = [&](const std::vector<Tensor<double>>& in) {
        return model::cat_classify(StageFeatures<double>{2, 2, 8, in[0]}, StageFeatures<double>{2, 2, 8, in[1]}, cat_head);
    };
    CHECK(nn::grad_check(cat_op, {hr.tensor, ff.tensor, cat_head.fc1_w, cat_head.fc2_w}) < 1e-4);

    auto si_head = model::FusionHead<double>::create(store, "s", 8, 6, 0.1, rng);
    for (auto* w : {&si_head.fc1_w, &si_head.fc2_w}) test::copy_values(*w, random_tensor(w->shape(), rng, 0.5));
    auto si_op = [&](const std::vector<Tensor<double>>& in) {
        return model::si_classify(StageFeatures<double>{2, 2, 8, in[0]}, si_head);
    };
    CHECK(nn::grad_check(si_op, {ff.tensor, si_head.fc1_w, si_head.fc2_w}) < 1e-4);
}

TEST_CASE("DCA with layer-norm fusion passes grad_check")
{
    DcaParams p(16, 8, false, 15);
    std::mt19937_64 rng(16);
    auto fr = features(2, 2, 16, rng), ff = features(2, 2, 16, rng);
    auto op = [&](const std::vector<Tensor<double>>& in) {
        auto d = model::dual_cross_attention(StageFeatures<double>{2, 2, 16, in[0]}, StageFeatures<double>{2, 2, 16, in[1]},
                                             p.res, p.fup, p.ln_res, p.ln_fup);
        return nn::concat(std::vector{d.h_res.tensor, d.h_fup.tensor});
    };
    std::vector<Tensor<double>> inputs{fr.tensor, ff.tensor};
    for (const auto& item : p.store.items()) inputs.push_back(item.second);
    CHECK(nn::grad_check(op, inputs) < 1e-4);
}

TEST_CASE("full TREX forward at a 2x2 Stage-4 grid passes grad_check")
{
    auto cfg = small_config(model::ModelKind::Trex);
    model::PairModel<double> m(cfg, 21);
    std::mt19937_64 rng(22);
    // Lift the tiny initialisation so gradients are well above the floor.
    for (const auto& [name, t] : m.params().items()) {
        auto copy = t;
        if (name.find("weight") != std::string::npos || name.find(".w") != std::string::npos)
            test::copy_values(copy, random_tensor(t.shape(), rng, 0.3));
    }
    auto ref = random_tensor({32, 32, 3}, rng);
    auto later = random_tensor({32, 32, 3}, rng);
    auto op = [&](const std::vector<Tensor<double>>& in) {
        auto out = m.forward(in[0], in[1], 0.25);
        REQUIRE(out.f_fup.grid_h == 2);
        REQUIRE(out.f_fup.grid_w == 2);
        return out.logits;
    };
    std::vector<Tensor<double>> inputs{ref, later};
    for (const auto& item : m.params().items()) inputs.push_back(item.second);
    nn::GradCheckOptions opt;
    opt.max_probes_per_input = 6;
    opt.eps = 1e-5;
    opt.fourth_order = true;
    auto report = nn::grad_check_report(op, inputs, opt);
    INFO("probes " << report.probes);
    CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("ablation hooks: no_dca feeds raw features, no_dt ignores the time gap")
{
    std::mt19937_64 rng(31);
    auto cfg = small_config(model::ModelKind::Trex);
    auto ref = random_tensor({32, 32, 3}, rng), later = random_tensor({32, 32, 3}, rng);

    cfg.no_dca = true;
    model::PairModel<double> plain(cfg, 5);
    auto out = plain.forward(ref, later, 0.5);
    CHECK_FALSE(out.dca.has_value());
    auto head = head_of(plain.params());
    auto expect = model::trex_classify(out.f_res, out.f_fup, out.f_fup, 0.5, head);
    CHECK(out.logits.at(0) == expect.at(0));
    CHECK(out.logits.at(1) == expect.at(1));
    for (const auto& [name, t] : plain.params().items()) CHECK(name.rfind("dca.", 0) != 0);

    cfg.no_dca = false;
    cfg.no_dt = true;
    model::PairModel<double> timeless(cfg, 5);
    for (const auto& [name, t] : timeless.params().items()) {
        auto copy = t;
        test::copy_values(copy, random_tensor(t.shape(), rng, 0.3));
    }
    auto a = timeless.forward(ref, later, 0.0).logits;
    for (double dt : {0.1, 0.5, 1.0}) {
        auto b = timeless.forward(ref, later, dt).logits;
        CHECK(a.at(0) == b.at(0));
        CHECK(a.at(1) == b.at(1));
    }
    CHECK(timeless.forward(ref, later, 0.0).dca.has_value());
}

TEST_CASE("pair model: siamese encoder, deterministic inference, dropout only in training")
{
    auto cfg = small_config(model::ModelKind::Trex);
    model::PairModel<float> m(cfg, 3);
    std::size_t patch_embeds = 0;
    for (const auto& [name, t] : m.params().items()) patch_embeds += name.find("patch_embed.weight") != std::string::npos;
    CHECK(patch_embeds == 1);

    std::mt19937_64 rng(1);
    std::vector<float> px(32 * 32 * 3);
    std::normal_distribution<float> d;
    for (auto& v : px) v = d(rng);
    Tensor<float> img({32, 32, 3}, px);
    nn::NoGradGuard guard;
    auto out = m.forward(img, img, 0.3);
    for (std::size_t i = 0; i < out.f_res.tensor.numel(); ++i) CHECK(out.f_res.tensor.at(i) == out.f_fup.tensor.at(i));
    CHECK(m.predict_lr(img, img, 0.3) == m.predict_lr(img, img, 0.3));

    auto si_cfg = small_config(model::ModelKind::Si);
    model::PairModel<float> si(si_cfg, 3);
    CHECK(si.predict_lr(img, img, 0.0) == si.predict_lr(img, img, 0.0));
}

TEST_CASE("model config validation")
{
    auto cfg = small_config(model::ModelKind::Trex);
    cfg.dca_heads = 5;
    CHECK_THROWS_AS(cfg.validate(), model::ConfigError);
    cfg.dca_heads = 8;
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), model::ConfigError);
    CHECK_THROWS_AS(model::parse_model_kind("resnet"), model::ConfigError);
    CHECK(model::parse_model_kind("cat") == model::ModelKind::Cat);
}

}  // TEST_SUITE

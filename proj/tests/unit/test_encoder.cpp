#include <doctest.h>

#include "helpers.hpp"
#include "trex/model/encoder.hpp"
#include "trex/nn/grad_check.hpp"
#include "trex/nn/ops.hpp"

#include <set>

using namespace trex;
using model::EncoderConfig;
using model::StageFeatures;
using nn::Tensor;
using test::random_tensor;

namespace {

template <class T>
model::PatchEmbedParams<T> embed_params(std::size_t patch, std::size_t channels)
{
    std::mt19937_64 rng(1);
    const std::size_t feat = patch * patch * 3;
    model::PatchEmbedParams<T> p;
    p.weight = Tensor<T>({feat, channels});
    nn::trunc_normal_(p.weight, 0.02, rng);
    p.bias = Tensor<T>::zeros({channels});
    p.norm_g = Tensor<T>::full({channels}, T(1));
    p.norm_b = Tensor<T>::zeros({channels});
    return p;
}

model::PatchMergeParams<double> merge_params(std::size_t c, std::mt19937_64& rng)
{
    return {random_tensor({4 * c}, rng), random_tensor({4 * c}, rng), random_tensor({4 * c, 2 * c}, rng, 0.3)};
}

model::SwinBlockParams<double> block_params(model::ParamStore<double>& store, std::size_t c, std::size_t heads,
                                            std::size_t window, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto p = model::SwinBlockParams<double>::create(store, "blk", c, heads, window, 2, rng);
    // Replace the tiny init with O(1) values so every path carries signal.
    for (const auto& [name, t] : store.items()) {
        auto copy = t;
        test::copy_values(copy, random_tensor(t.shape(), rng, name.find("weight") != std::string::npos ? 0.4 : 0.5));
    }
    return p;
}

// Which output tokens react to a perturbation of token (i, j)?
std::set<std::pair<std::size_t, std::size_t>> influenced(const model::WindowGeometry& g,
                                                         const model::SwinBlockParams<double>& p,
                                                         const Tensor<double>& x, std::size_t i, std::size_t j)
{
    const StageFeatures<double> base{g.grid_h, g.grid_w, g.channels, x};
    const auto y0 = model::swin_block(base, g, p).tensor;
    std::vector<double> v(x.values().begin(), x.values().end());
    for (std::size_t c = 0; c < g.channels; ++c) v[(i * g.grid_w + j) * g.channels + c] += (c % 2 ? 0.3 : -0.2) * static_cast<double>(c + 1);
    const auto y1 = model::swin_block(StageFeatures<double>{g.grid_h, g.grid_w, g.channels, Tensor<double>(x.shape(), v)}, g, p).tensor;
    std::set<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < g.grid_h; ++a)
        for (std::size_t b = 0; b < g.grid_w; ++b)
            for (std::size_t c = 0; c < g.channels; ++c) {
                const std::size_t at = (a * g.grid_w + b) * g.channels + c;
                if (std::abs(y1.at(at) - y0.at(at)) > 1e-12) {
                    out.insert({a, b});
                    break;
                }
            }
    return out;
}

// Region label along one axis of the rolled grid (the three slices of a shifted layout).
int region(std::size_t coord, std::size_t extent, std::size_t window, std::size_t shift)
{
    if (shift == 0) return 0;
    if (coord < extent - window) return 0;
    if (coord < extent - shift) return 1;
    return 2;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("patch_embed grid arithmetic")
{
    EncoderConfig small = EncoderConfig::named("swin-small");
    auto f = model::patch_embed(Tensor<float>::zeros({224, 224, 3}), small, embed_params<float>(4, 96));
    CHECK(f.grid_h == 224 / 4);
    CHECK(f.grid_w == 56);
    CHECK(f.tensor.shape() == nn::Shape{56, 56, 96});

    EncoderConfig toy;
    auto g = model::patch_embed(Tensor<double>::zeros({64, 64, 3}), toy, embed_params<double>(4, 16));
    CHECK(g.grid_h == 16);
    CHECK(g.grid_w == 16);

    CHECK_THROWS_AS(model::patch_embed(Tensor<double>::zeros({225, 224, 3}), toy, embed_params<double>(4, 16)),
                    model::ConfigError);
    EncoderConfig bad = small;
    bad.input_h = 225;
    CHECK_THROWS_AS(bad.validate(), model::ConfigError);
}

TEST_CASE("patch_embed flattens non-overlapping patches before projecting")
{
    EncoderConfig cfg;
    cfg.patch = 2;
    std::vector<double> img(4 * 4 * 3);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::sin(0.7 * static_cast<double>(i));
    model::PatchEmbedParams<double> p;
    p.weight = Tensor<double>::zeros({12, 12});
    for (std::size_t i = 0; i < 12; ++i) p.weight.mutable_values()[i * 12 + i] = 1.0;
    p.bias = Tensor<double>::zeros({12});
    p.norm_g = Tensor<double>::full({12}, 1.0);
    p.norm_b = Tensor<double>::zeros({12});
    auto f = model::patch_embed(Tensor<double>({4, 4, 3}, img), cfg, p);
    REQUIRE(f.tensor.shape() == nn::Shape{2, 2, 12});
    for (std::size_t py = 0; py < 2; ++py)
        for (std::size_t px = 0; px < 2; ++px) {
            std::vector<double> patch;
            for (std::size_t iy = 0; iy < 2; ++iy)
                for (std::size_t ix = 0; ix < 2; ++ix)
                    for (std::size_t c = 0; c < 3; ++c) patch.push_back(img[((2 * py + iy) * 4 + 2 * px + ix) * 3 + c]);
            double mean = 0, var = 0;
            for (double v : patch) mean += v / 12;
            for (double v : patch) var += (v - mean) * (v - mean) / 12;
            for (std::size_t k = 0; k < 12; ++k)
                CHECK(f.tensor.at((py * 2 + px) * 12 + k) ==
                      doctest::Approx((patch[k] - mean) / std::sqrt(var + 1e-5)).epsilon(1e-12));
        }
}

TEST_CASE("window_partition geometry and exact inverse")
{
    auto big = model::window_partition(Tensor<float>::zeros({56, 56, 2}), 7);
    CHECK(big.shape() == nn::Shape{(56 / 7) * (56 / 7), 49, 2});
    CHECK(big.dim(0) == 64);

    std::mt19937_64 rng(3);
    auto x = random_tensor({8, 8, 3}, rng);
    auto w = model::window_partition(x, 4);
    CHECK(w.shape() == nn::Shape{4, 16, 3});
    // token (r, c) of window (wy, wx) comes from grid cell (4wy + r, 4wx + c)
    for (std::size_t wy = 0; wy < 2; ++wy)
        for (std::size_t wx = 0; wx < 2; ++wx)
            for (std::size_t r = 0; r < 4; ++r)
                for (std::size_t c = 0; c < 4; ++c)
                    for (std::size_t ch = 0; ch < 3; ++ch)
                        CHECK(w.at(((wy * 2 + wx) * 16 + r * 4 + c) * 3 + ch) ==
                              x.at(((4 * wy + r) * 8 + 4 * wx + c) * 3 + ch));

    for (auto [h, wd, win] : {std::tuple{8u, 8u, 4u}, {6u, 9u, 3u}, {4u, 4u, 4u}, {7u, 7u, 7u}, {12u, 4u, 2u}}) {
        auto t = random_tensor({h, wd, 5}, rng);
        auto back = model::window_reverse(model::window_partition(t, win), h, wd, win);
        REQUIRE(back.shape() == t.shape());
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back.at(i) == t.at(i));
    }
}

TEST_CASE("window_partition pads indivisible grids and the reverse crops")
{
    std::mt19937_64 rng(4);
    auto t = random_tensor({5, 6, 2}, rng);
    auto w = model::window_partition(t, 4);
    CHECK(w.shape() == nn::Shape{4, 16, 2});
    auto back = model::window_reverse(w, 5, 6, 4);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back.at(i) == t.at(i));
}

TEST_CASE("swin_block: shift must be below the window")
{
    CHECK_THROWS_AS(model::WindowGeometry::make(8, 8, 8, 4, 4), model::ConfigError);
    CHECK_NOTHROW(model::WindowGeometry::make(8, 8, 8, 4, 2));
}

TEST_CASE("swin_block: unshifted layout is plain windowed attention")
{
    auto g = model::WindowGeometry::make(8, 8, 8, 4, 0);
    CHECK(g.mask<double>().empty());

    model::ParamStore<double> store;
    auto p = block_params(store, 8, 2, 4, 9);
    std::mt19937_64 rng(1);
    auto x = random_tensor({8, 8, 8}, rng);
    auto y = model::swin_block(StageFeatures<double>{8, 8, 8, x}, g, p).tensor;

    // Independent composition: partition, unmasked attention, reverse, then the MLP residual.
    auto h = nn::layer_norm(x, p.norm1_g, p.norm1_b, 1e-5);
    auto win = model::window_partition(h, 4);
    auto att = nn::attention(nn::linear(win, p.wq, p.bq), nn::linear(win, p.wk, p.bk), nn::linear(win, p.wv, p.bv),
                             2, {}, p.pos_bias);
    auto x1 = nn::add(x, model::window_reverse(nn::linear(att.output, p.wproj, p.bproj), 8, 8, 4));
    auto mlp = nn::linear(nn::gelu(nn::linear(nn::layer_norm(x1, p.norm2_g, p.norm2_b, 1e-5), p.fc1_w, p.fc1_b)),
                          p.fc2_w, p.fc2_b);
    auto expect = nn::add(x1, mlp);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
}

TEST_CASE("swin_block: tokens interact only within their (shifted, masked) window")
{
    model::ParamStore<double> store;
    auto p = block_params(store, 8, 2, 4, 10);
    std::mt19937_64 rng(2);
    auto x = random_tensor({8, 8, 8}, rng);
    for (std::size_t shift : {0u, 2u}) {
        auto g = model::WindowGeometry::make(8, 8, 8, 4, shift);
        for (auto [i, j] : {std::pair{0u, 0u}, {3u, 5u}, {7u, 7u}, {6u, 1u}, {2u, 2u}}) {
            const auto got = influenced(g, p, x, i, j);
            const std::size_t ri = (i + 8 - shift) % 8, rj = (j + 8 - shift) % 8;
            for (std::size_t a = 0; a < 8; ++a)
                for (std::size_t b = 0; b < 8; ++b) {
                    const std::size_t ra = (a + 8 - shift) % 8, rb = (b + 8 - shift) % 8;
                    const bool same_window = ra / 4 == ri / 4 && rb / 4 == rj / 4;
                    const bool same_region = region(ra, 8, 4, shift) == region(ri, 8, 4, shift) &&
                                             region(rb, 8, 4, shift) == region(rj, 8, 4, shift);
                    INFO("shift " << shift << " source " << i << "," << j << " target " << a << "," << b);
                    CHECK(got.count({a, b}) == static_cast<std::size_t>(same_window && same_region));
                }
        }
    }
}

TEST_CASE("swin_block preserves shape for legal configurations")
{
    std::mt19937_64 rng(5);
    for (auto [h, w, c, heads, win] : {std::tuple{8u, 8u, 8u, 2u, 4u}, {4u, 4u, 16u, 4u, 4u}, {6u, 6u, 4u, 1u, 3u},
                                       {2u, 2u, 8u, 8u, 4u}, {5u, 7u, 6u, 3u, 4u}}) {
        for (std::size_t shift : {std::size_t{0}, static_cast<std::size_t>(win / 2)}) {
            model::ParamStore<double> store;
            auto p = block_params(store, c, heads, win, h * 31 + shift);
            auto g = model::WindowGeometry::make(h, w, c, win, shift);
            auto y = model::swin_block(StageFeatures<double>{h, w, c, random_tensor({h, w, c}, rng)}, g, p);
            CHECK(y.tensor.shape() == nn::Shape{h, w, c});
            CHECK(y.grid_h == h);
            CHECK(y.grid_w == w);
        }
    }
}

TEST_CASE("swin_block passes grad_check at 8x8x8")
{
    for (std::size_t shift : {0u, 2u}) {
        model::ParamStore<double> store;
        auto p = block_params(store, 8, 2, 4, 77 + shift);
        auto g = model::WindowGeometry::make(8, 8, 8, 4, shift);
        std::mt19937_64 rng(6);
        std::vector<Tensor<double>> inputs{random_tensor({8, 8, 8}, rng)};
        for (const auto& item : store.items()) inputs.push_back(item.second);
        auto op = [&](const std::vector<Tensor<double>>& in) {
            return model::swin_block(StageFeatures<double>{8, 8, 8, in[0]}, g, p).tensor;
        };
        nn::GradCheckOptions opt;
        opt.max_probes_per_input = 24;
        opt.eps = 1e-5;
        auto report = nn::grad_check_report(op, inputs, opt);
        INFO("shift " << shift << " probes " << report.probes);
        CHECK(report.max_relative_error < 1e-4);
    }
}

TEST_CASE("patch_merge halves the grid and doubles channels")
{
    std::mt19937_64 rng(7);
    auto toy = model::patch_merge(StageFeatures<double>{4, 4, 8, random_tensor({4, 4, 8}, rng)}, merge_params(8, rng));
    CHECK(toy.tensor.shape() == nn::Shape{2, 2, 16});
    CHECK(toy.channels == 16);

    auto big = model::patch_merge(StageFeatures<double>{56, 56, 4, random_tensor({56, 56, 4}, rng)}, merge_params(4, rng));
    CHECK(big.tensor.shape() == nn::Shape{28, 28, 8});

    CHECK_THROWS_AS(model::patch_merge(StageFeatures<double>{5, 5, 8, random_tensor({5, 5, 8}, rng)}, merge_params(8, rng)),
                    nn::DimensionError);
}

TEST_CASE("patch_concat gathers each 2x2 neighbourhood")
{
    std::mt19937_64 rng(8);
    auto x = random_tensor({4, 4, 2}, rng);
    auto y = model::patch_concat(x);
    REQUIRE(y.shape() == nn::Shape{2, 2, 8});
    std::multiset<double> got, want;
    for (std::size_t k = 0; k < 8; ++k) got.insert(y.at(k));
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t ch = 0; ch < 2; ++ch) want.insert(x.at((r * 4 + c) * 2 + ch));
    CHECK(got == want);
}

TEST_CASE("patch_merge passes grad_check")
{
    std::mt19937_64 rng(9);
    auto p = merge_params(4, rng);
    auto x = random_tensor({4, 4, 4}, rng);
    auto op = [&](const std::vector<Tensor<double>>& in) {
        return model::patch_merge(StageFeatures<double>{4, 4, 4, in[0]}, p).tensor;
    };
    CHECK(nn::grad_check(op, {x, p.norm_g, p.norm_b, p.reduction}) < 1e-4);
}

TEST_CASE("encode: toy config reaches a 2x2 Stage-4 grid through four stages")
{
    EncoderConfig cfg;
    cfg.depths = {0, 3, 0, 1};
    model::ParamStore<float> store;
    std::mt19937_64 rng(1);
    model::SwinEncoder<float> enc(cfg, store, rng);
    std::mt19937_64 img_rng(2);
    std::vector<float> px(64 * 64 * 3);
    std::normal_distribution<float> d;
    for (auto& v : px) v = d(img_rng);
    nn::NoGradGuard guard;
    auto stages = enc.encode_stages(Tensor<float>({64, 64, 3}, px));
    REQUIRE(stages.size() == 4);
    const std::size_t expect_grid[4] = {16, 8, 4, 2};
    for (std::size_t s = 0; s < 4; ++s) {
        CHECK(stages[s].grid_h == expect_grid[s]);
        CHECK(stages[s].channels == cfg.dims[s]);
    }
    CHECK(stages.back().grid_h == 64 / 32);
    CHECK(stages.back().tensor.shape() == nn::Shape{2, 2, 128});
}

TEST_CASE("encode: Swin-Small geometry reaches a 7x7 Stage-4 grid")
{
    const auto cfg = EncoderConfig::named("swin-small");
    CHECK(cfg.input_h == 224);
    CHECK(cfg.window == 7);
    CHECK(cfg.stage_grid_h(3) == 224 / 32);
    model::ParamStore<float> store;
    std::mt19937_64 rng(1);
    model::SwinEncoder<float> enc(cfg, store, rng);
    nn::NoGradGuard guard;
    auto f = enc.encode(Tensor<float>::zeros({224, 224, 3}));
    CHECK(f.grid_h == 7);
    CHECK(f.grid_w == 7);
    CHECK(f.channels == 768);
}

TEST_CASE("encode is deterministic in inference mode and rejects wrong input sizes")
{
    model::ParamStore<float> store;
    std::mt19937_64 rng(4);
    model::SwinEncoder<float> enc(EncoderConfig{}, store, rng);
    std::vector<float> px(64 * 64 * 3);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(std::sin(0.01 * i));
    nn::NoGradGuard guard;
    auto a = enc.encode(Tensor<float>({64, 64, 3}, px));
    auto b = enc.encode(Tensor<float>({64, 64, 3}, px));
    for (std::size_t i = 0; i < a.tensor.numel(); ++i) CHECK(a.tensor.at(i) == b.tensor.at(i));
    CHECK_THROWS_AS(enc.encode(Tensor<float>::zeros({32, 32, 3})), nn::DimensionError);
}

TEST_CASE("encoder config validation")
{
    EncoderConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.dims = {16, 32, 48, 128};
    CHECK_THROWS_AS(cfg.validate(), model::ConfigError);
    cfg = EncoderConfig{};
    cfg.heads = {3, 2, 4, 8};
    CHECK_THROWS_AS(cfg.validate(), model::ConfigError);
    CHECK_THROWS_AS(EncoderConfig::named("huge"), model::ConfigError);
    for (auto name : {"toy", "tiny", "small", "swin-tiny", "swin-small"}) CHECK_NOTHROW(EncoderConfig::named(name).validate());
}

}  // TEST_SUITE

#include "trex/interpret/heatmap.hpp"

#include "trex/nn/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace trex::interpret {

std::pair<std::size_t, std::size_t> HeatMap::argmax() const
{
    if (values.empty()) throw std::logic_error("argmax of an empty heat map");
    const auto i = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
    return {i / cols, i % cols};
}

HeatMap normalize_heatmap(std::size_t rows, std::size_t cols, std::vector<double> raw, std::string source)
{
    if (raw.size() != rows * cols) throw std::invalid_argument("heat map values do not match its grid");
    HeatMap map{rows, cols, std::move(raw), false, std::move(source)};
    double peak = 0.0;
    for (auto& v : map.values) {
        if (!(v > 0.0)) v = 0.0;
        peak = std::max(peak, v);
    }
    if (peak == 0.0) {
        map.degenerate = true;
        return map;
    }
    for (auto& v : map.values) v /= peak;
    return map;
}

std::string_view to_string(Direction d)
{
    return d == Direction::ResToFup ? "res2fup" : "fup2res";
}

Direction parse_direction(std::string_view text)
{
    if (text == "res2fup") return Direction::ResToFup;
    if (text == "fup2res") return Direction::FupToRes;
    throw std::invalid_argument("unknown attention direction '" + std::string(text) + "' (expected res2fup or fup2res)");
}

template <class T>
HeatMap attn_heatmap(const model::DcaOutput<T>& dca, std::size_t query_index, Direction direction,
                     std::optional<std::size_t> head)
{
    const auto& attn = direction == Direction::ResToFup ? dca.attn_res2fup : dca.attn_fup2res;
    const auto& target = direction == Direction::ResToFup ? dca.h_fup : dca.h_res;
    const std::size_t heads = attn.dim(0), n = attn.dim(1), m = attn.dim(2);
    if (query_index >= n) {
        throw std::out_of_range("query index " + std::to_string(query_index) + " out of range for " + std::to_string(n) + " tokens");
    }
    if (head && *head >= heads) throw std::out_of_range("head " + std::to_string(*head) + " out of range");
    if (m != target.grid_h * target.grid_w) throw std::logic_error("attention width does not match the target grid");
    std::vector<double> row(m, 0.0);
    const auto v = attn.values();
    for (std::size_t h = 0; h < heads; ++h) {
        if (head && h != *head) continue;
        for (std::size_t j = 0; j < m; ++j) row[j] += static_cast<double>(v[(h * n + query_index) * m + j]);
    }
    const double count = head ? 1.0 : static_cast<double>(heads);
    for (auto& x : row) x /= count;
    std::string source = "attention:" + std::string(to_string(direction)) + ":q" + std::to_string(query_index);
    if (head) source += ":h" + std::to_string(*head);
    return normalize_heatmap(target.grid_h, target.grid_w, std::move(row), std::move(source));
}

HeatMap grad_cam_from(std::size_t rows, std::size_t cols, std::size_t channels, const std::vector<double>& activations,
                      const std::vector<double>& gradients, std::string source)
{
    const std::size_t cells = rows * cols;
    if (activations.size() != cells * channels || gradients.size() != cells * channels) {
        throw std::invalid_argument("grad_cam: activation/gradient sizes do not match the grid");
    }
    std::vector<double> weights(channels, 0.0);
    for (std::size_t i = 0; i < cells; ++i) {
        for (std::size_t c = 0; c < channels; ++c) weights[c] += gradients[i * channels + c];
    }
    for (auto& w : weights) w /= static_cast<double>(cells);
    std::vector<double> raw(cells, 0.0);
    for (std::size_t i = 0; i < cells; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < channels; ++c) s += weights[c] * activations[i * channels + c];
        raw[i] = std::max(0.0, s);
    }
    return normalize_heatmap(rows, cols, std::move(raw), std::move(source));
}

template <class T>
HeatMap grad_cam(model::PairModel<T>& model, const nn::Tensor<T>& ref_image, const nn::Tensor<T>& later_image,
                 double dt_norm, data::Outcome target)
{
    const auto& cfg = model.config();
    model::StageFeatures<T> f_res, f_fup;
    {
        nn::NoGradGuard guard;
        if (cfg.kind == model::ModelKind::Si) {
            f_fup = model.encoder().encode(cfg.si_view == model::SiView::Later ? later_image : ref_image);
        } else {
            f_res = model.encoder().encode(ref_image);
            f_fup = model.encoder().encode(later_image);
        }
    }
    f_fup.tensor = f_fup.tensor.detach();
    f_fup.tensor.set_requires_grad(true);
    if (cfg.kind == model::ModelKind::Si) f_res = f_fup;

    std::vector<nn::Tensor<T>> frozen;
    for (const auto& [name, p] : model.params().items()) {
        if (p.requires_grad()) frozen.push_back(p);
    }
    for (auto& p : frozen) p.set_requires_grad(false);
    struct Restore {
        std::vector<nn::Tensor<T>>& params;
        ~Restore()
        {
            for (auto& p : params) p.set_requires_grad(true);
        }
    } restore{frozen};

    const auto logits = model.classify_features(f_res, f_fup, dt_norm).logits;
    nn::Tensor<T> pick({2});
    pick.mutable_values()[static_cast<std::size_t>(target)] = T(1);
    nn::sum(nn::mul(logits, pick)).backward();

    const std::size_t cells = f_fup.grid_h * f_fup.grid_w, channels = f_fup.channels;
    std::vector<double> act(cells * channels), grad(cells * channels, 0.0);
    const auto a = f_fup.tensor.values();
    for (std::size_t i = 0; i < act.size(); ++i) act[i] = static_cast<double>(a[i]);
    if (f_fup.tensor.has_grad()) {
        const auto g = f_fup.tensor.grad();
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = static_cast<double>(g[i]);
    }
    return grad_cam_from(f_fup.grid_h, f_fup.grid_w, channels, act, grad, "gradcam:" + std::string(data::to_string(target)));
}

std::array<std::uint8_t, 3> colormap(double v)
{
    v = std::clamp(v, 0.0, 1.0);
    auto channel = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
    return {channel(1.5 - std::fabs(4.0 * v - 3.0)), channel(1.5 - std::fabs(4.0 * v - 2.0)), channel(1.5 - std::fabs(4.0 * v - 1.0))};
}

data::Image overlay(const data::Image& image, const HeatMap& map, double alpha)
{
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("overlay alpha must lie in [0,1]");
    if (map.rows == 0 || map.cols == 0) throw std::invalid_argument("overlay of an empty heat map");
    data::Image out = image;
    for (std::size_t y = 0; y < image.height; ++y) {
        const std::size_t r = y * map.rows / image.height;
        for (std::size_t x = 0; x < image.width; ++x) {
            const double h = map.at(r, x * map.cols / image.width);
            const double w = alpha * h;
            if (w == 0.0) continue;
            const auto colour = colormap(h);
            auto* px = out.px(x, y);
            for (int c = 0; c < 3; ++c) {
                px[c] = static_cast<std::uint8_t>(std::lround((1.0 - w) * px[c] + w * colour[static_cast<std::size_t>(c)]));
            }
        }
    }
    return out;
}

void overlay_export(const data::Image& image, const HeatMap& map, const std::filesystem::path& path, double alpha)
{
    data::write_image(overlay(image, map, alpha), path);
}

void write_overlay_index(const std::vector<OverlayEntry>& entries, std::ostream& out)
{
    out << "file,patient_id,date_days,kind,detail\n";
    for (const auto& e : entries) out << e.file << ',' << e.patient_id << ',' << e.date_days << ',' << e.kind << ',' << e.detail << '\n';
}

template HeatMap attn_heatmap<float>(const model::DcaOutput<float>&, std::size_t, Direction, std::optional<std::size_t>);
template HeatMap attn_heatmap<double>(const model::DcaOutput<double>&, std::size_t, Direction, std::optional<std::size_t>);
template HeatMap grad_cam<float>(model::PairModel<float>&, const nn::Tensor<float>&, const nn::Tensor<float>&, double, data::Outcome);
template HeatMap grad_cam<double>(model::PairModel<double>&, const nn::Tensor<double>&, const nn::Tensor<double>&, double, data::Outcome);

}  // namespace trex::interpret

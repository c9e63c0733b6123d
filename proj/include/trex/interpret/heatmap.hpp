#pragma once

#include "trex/data/cohort.hpp"
#include "trex/data/image.hpp"
#include "trex/model/model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace trex::interpret {

/// Non-negative grid, max-normalised to [0,1] (all zero when degenerate).
struct HeatMap {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;  // row-major
    bool degenerate = false;     // no positive mass before normalisation
    std::string source;          // e.g. "attention:res2fup:q3" or "gradcam:LR"

    double at(std::size_t r, std::size_t c) const { return values.at(r * cols + c); }
    /// (row, col) of the first maximal cell.
    std::pair<std::size_t, std::size_t> argmax() const;
};

/// Clamps negatives to 0 and divides by the maximum.
HeatMap normalize_heatmap(std::size_t rows, std::size_t cols, std::vector<double> raw, std::string source = {});

enum class Direction { ResToFup, FupToRes };
std::string_view to_string(Direction d);
Direction parse_direction(std::string_view text);

/// Attention row of `query_index` averaged over heads (or a single `head`),
/// laid out on the target grid.
template <class T>
HeatMap attn_heatmap(const model::DcaOutput<T>& dca, std::size_t query_index, Direction direction,
                     std::optional<std::size_t> head = std::nullopt);

/// ReLU(sum_c w_c * A_c) with w_c the spatial mean of G_c; A and G are [h,w,C].
HeatMap grad_cam_from(std::size_t rows, std::size_t cols, std::size_t channels, const std::vector<double>& activations,
                      const std::vector<double>& gradients, std::string source = {});

/// Grad-CAM of the `target` logit over the follow-up branch's Stage-4
/// activations (the single view for SI). Parameter gradients are not touched.
template <class T>
HeatMap grad_cam(model::PairModel<T>& model, const nn::Tensor<T>& ref_image, const nn::Tensor<T>& later_image,
                 double dt_norm, data::Outcome target = data::Outcome::LR);

/// Blue-to-red colour ramp.
std::array<std::uint8_t, 3> colormap(double v);

/// Nearest-neighbour upsampling of the map; each pixel is blended toward its
/// colour with weight alpha * heat. alpha must lie in [0,1].
data::Image overlay(const data::Image& image, const HeatMap& map, double alpha);
void overlay_export(const data::Image& image, const HeatMap& map, const std::filesystem::path& path, double alpha);

struct OverlayEntry {
    std::string file;
    std::string patient_id;
    int date_days = 0;
    std::string kind;    // "attention" or "gradcam"
    std::string detail;  // query index or class
};
void write_overlay_index(const std::vector<OverlayEntry>& entries, std::ostream& out);

}  // namespace trex::interpret

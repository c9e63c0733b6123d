#pragma once

#include "trex/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace trex::data {

/// 8-bit interleaved RGB, row-major.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

    std::uint8_t* px(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
    const std::uint8_t* px(std::size_t x, std::size_t y) const { return rgb.data() + (y * width + x) * 3; }
    bool operator==(const Image&) const = default;
};

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads binary PPM (P6, maxval 255) or PNG, chosen by file signature.
Image read_image(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);
/// Dispatches on extension (.png, otherwise PPM).
void write_image(const Image& image, const std::filesystem::path& path);

/// Half-pixel-centred bilinear resampling.
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);

/// Dihedral group D4: element = rotation quarter-turns (0..3) + 4 * horizontal flip.
struct D4 {
    int rotations = 0;
    bool flip = false;

    int index() const { return rotations + (flip ? 4 : 0); }
    static D4 from_index(int index) { return {index % 4, index >= 4}; }
    /// Composition: (a * b) applies b first, then a.
    friend D4 operator*(const D4& a, const D4& b);
    bool operator==(const D4&) const = default;
};

/// Applies flip (if any) then counter-clockwise quarter turns. Square images only.
Image apply_d4(const Image& image, D4 element);

/// Uniform random D4 element applied to a square image.
Image augment(const Image& image, std::mt19937_64& rng, D4* chosen = nullptr);

/// [H,W,3] tensor with (value/255 - 0.5) / 0.25 per channel.
template <class T>
nn::Tensor<T> to_tensor(const Image& image);

}  // namespace trex::data

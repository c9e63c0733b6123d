#include "trex/data/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace trex::data {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw ImageIoError("cannot open " + path.string());
    return f;
}

// Skips whitespace and '#' comments in a PPM header.
int next_header_token(std::istream& in)
{
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    return value;
}

Image read_ppm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError("cannot open " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6") throw ImageIoError(path.string() + ": not a binary PPM (P6)");
    const int w = next_header_token(in);
    const int h = next_header_token(in);
    const int maxval = next_header_token(in);
    if (w <= 0 || h <= 0 || maxval != 255) throw ImageIoError(path.string() + ": unsupported PPM header");
    in.get();
    Image image(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
    in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
    if (!in) throw ImageIoError(path.string() + ": truncated pixel data");
    return image;
}

Image read_png(const std::filesystem::path& path)
{
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw ImageIoError(path.string() + ": " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    Image image(png.width, png.height);
    if (!png_image_finish_read(&png, nullptr, image.rgb.data(), 0, nullptr)) {
        png_image_free(&png);
        throw ImageIoError(path.string() + ": " + png.message);
    }
    return image;
}

}  // namespace

Image read_image(const std::filesystem::path& path)
{
    std::array<unsigned char, 8> signature{};
    {
        auto f = open_file(path, "rb");
        if (std::fread(signature.data(), 1, signature.size(), f.get()) < 2) {
            throw ImageIoError(path.string() + ": file too short");
        }
    }
    if (png_sig_cmp(signature.data(), 0, 8) == 0) return read_png(path);
    return read_ppm(path);
}

void write_ppm(const Image& image, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError("cannot write " + path.string());
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
    if (!out) throw ImageIoError("write failed for " + path.string());
}

void write_png(const Image& image, const std::filesystem::path& path)
{
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
        throw ImageIoError("cannot write " + path.string() + ": " + png.message);
    }
}

void write_image(const Image& image, const std::filesystem::path& path)
{
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        write_png(image, path);
    } else {
        write_ppm(image, path);
    }
}

Image resize_bilinear(const Image& image, std::size_t width, std::size_t height)
{
    if (image.width == width && image.height == height) return image;
    Image out(width, height);
    const double sx = static_cast<double>(image.width) / static_cast<double>(width);
    const double sy = static_cast<double>(image.height) / static_cast<double>(height);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = image.px(x0, y0)[c] * (1 - wx) + image.px(x1, y0)[c] * wx;
                const double bottom = image.px(x0, y1)[c] * (1 - wx) + image.px(x1, y1)[c] * wx;
                out.px(x, y)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bottom * wy));
            }
        }
    }
    return out;
}

D4 operator*(const D4& a, const D4& b)
{
    // R^a F^fa R^b F^fb = R^(a ± b) F^(fa xor fb), since F R = R^-1 F.
    const int turns = a.flip ? a.rotations - b.rotations : a.rotations + b.rotations;
    return {((turns % 4) + 4) % 4, a.flip != b.flip};
}

Image apply_d4(const Image& image, D4 element)
{
    if (image.width != image.height) {
        throw std::invalid_argument("augment: image must be square, got " + std::to_string(image.width) + "x" +
                                    std::to_string(image.height));
    }
    const std::size_t n = image.width;
    Image out(n, n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            // Invert the map: undo rotations (clockwise), then the flip.
            std::size_t sx = x, sy = y;
            for (int r = 0; r < element.rotations; ++r) {
                const std::size_t tx = n - 1 - sy;
                sy = sx;
                sx = tx;
            }
            if (element.flip) sx = n - 1 - sx;
            std::copy_n(image.px(sx, sy), 3, out.px(x, y));
        }
    }
    return out;
}

Image augment(const Image& image, std::mt19937_64& rng, D4* chosen)
{
    std::uniform_int_distribution<int> pick(0, 7);
    const D4 element = D4::from_index(pick(rng));
    if (chosen) *chosen = element;
    return apply_d4(image, element);
}

template <class T>
nn::Tensor<T> to_tensor(const Image& image)
{
    std::vector<T> values(image.rgb.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<T>((image.rgb[i] / 255.0 - 0.5) / 0.25);
    }
    return nn::Tensor<T>({image.height, image.width, 3}, std::move(values));
}

template nn::Tensor<float> to_tensor<float>(const Image&);
template nn::Tensor<double> to_tensor<double>(const Image&);

}  // namespace trex::data

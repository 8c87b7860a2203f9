#pragma once

// Binary file -> grayscale image -> fixed-length feature vector.
//
// A file is read as an opaque byte stream. Each byte becomes one pixel
// intensity; bytes fill rows of a width chosen from the file size (see
// WidthRule), the last row is zero-padded, and the image is resized to a
// side x side square and flattened row-major.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "binsight/error.hpp"

namespace binsight {

using Byte = std::uint8_t;
using FeatureVector = std::vector<Byte>;

struct RawBinary {
    std::vector<Byte> bytes;
    std::string source_name;
};

/// Row-major 8-bit image; pixels.size() == width * height.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Byte> pixels;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, Byte fill = 0)
        : width(w), height(h), pixels(w * h, fill) {}
    GrayImage(std::size_t w, std::size_t h, std::vector<Byte> px)
        : width(w), height(h), pixels(std::move(px)) {
        if (width == 0 || height == 0 || pixels.size() != width * height) {
            throw ShapeMismatch("image pixel count " + std::to_string(pixels.size()) +
                                " does not match " + std::to_string(width) + "x" +
                                std::to_string(height));
        }
    }

    Byte at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
    Byte& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }

    bool operator==(const GrayImage&) const = default;
};

/// Maps a file size to the image width used before resizing. Bands are
/// checked in order; a band matches when byte_count <= max_bytes. The last
/// band has no upper bound.
class WidthRule {
public:
    struct Band {
        std::optional<std::uint64_t> max_bytes;  // inclusive; nullopt = open-ended
        std::size_t width;
        bool operator==(const Band&) const = default;
    };

    explicit WidthRule(std::vector<Band> bands) : bands_(std::move(bands)) { validate(); }

    /// <10 KiB -> 32, <30 KiB -> 64, <60 KiB -> 128, <100 KiB -> 256,
    /// <200 KiB -> 384, <500 KiB -> 512, <1 MiB -> 768, else 1024.
    static WidthRule standard() {
        return WidthRule({{10'239, 32},
                          {30'719, 64},
                          {61'439, 128},
                          {102'399, 256},
                          {204'799, 384},
                          {511'999, 512},
                          {1'048'575, 768},
                          {std::nullopt, 1024}});
    }

    /// Single open band: every file is laid out at `width`.
    static WidthRule fixed(std::size_t width) { return WidthRule({{std::nullopt, width}}); }

    std::size_t select(std::uint64_t byte_count) const {
        if (byte_count == 0) throw EmptyInput("cannot choose an image width for 0 bytes");
        for (const auto& band : bands_) {
            if (!band.max_bytes || byte_count <= *band.max_bytes) return band.width;
        }
        return bands_.back().width;  // unreachable after validate()
    }

    const std::vector<Band>& bands() const noexcept { return bands_; }

    bool operator==(const WidthRule&) const = default;

private:
    void validate() const {
        if (bands_.empty()) throw InvalidArgument("width rule has no bands");
        for (std::size_t i = 0; i < bands_.size(); ++i) {
            const auto& b = bands_[i];
            if (b.width == 0) throw InvalidArgument("width rule band with width 0");
            const bool last = i + 1 == bands_.size();
            if (last != !b.max_bytes.has_value()) {
                throw InvalidArgument("only the final width band may be open-ended, and it must be");
            }
            if (i > 0 && !last && *b.max_bytes <= *bands_[i - 1].max_bytes) {
                throw InvalidArgument("width rule bands must be strictly increasing");
            }
        }
    }

    std::vector<Band> bands_;
};

/// Parses a width-rule document: one band per line, `<max_bytes> <width>`,
/// with `* <width>` for the final open band. `#` starts a comment.
inline WidthRule parse_width_rule(std::string_view text) {
    std::vector<WidthRule::Band> bands;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string limit;
        if (!(fields >> limit)) continue;
        long long width = 0;
        std::string extra;
        if (!(fields >> width) || width <= 0 || (fields >> extra)) {
            throw ParseError(lineno, "expected '<max_bytes> <width>' or '* <width>'");
        }
        WidthRule::Band band{std::nullopt, static_cast<std::size_t>(width)};
        if (limit != "*") {
            std::uint64_t max = 0;
            auto [ptr, ec] = std::from_chars(limit.data(), limit.data() + limit.size(), max);
            if (ec != std::errc{} || ptr != limit.data() + limit.size()) {
                throw ParseError(lineno, "bad byte limit '" + limit + "'");
            }
            band.max_bytes = max;
        }
        bands.push_back(band);
    }
    try {
        return WidthRule(std::move(bands));
    } catch (const InvalidArgument& e) {
        throw ParseError(lineno, e.what());
    }
}

enum class Interpolation { nearest, bilinear };

struct FeatureConfig {
    std::size_t side = 32;
    Interpolation interpolation = Interpolation::nearest;
    WidthRule width_rule = WidthRule::standard();

    void validate() const {
        if (side < 2) throw InvalidArgument("feature side must be >= 2");
    }
    std::size_t feature_len() const { return side * side; }
};

inline std::size_t select_width(std::uint64_t byte_count, const WidthRule& rule = WidthRule::standard()) {
    return rule.select(byte_count);
}

/// Lays bytes out row by row at the given width, zero-padding the last row.
inline GrayImage bytes_to_image(std::span<const Byte> bytes, std::size_t width) {
    if (bytes.empty()) throw EmptyInput("cannot build an image from 0 bytes");
    if (width == 0) throw InvalidArgument("image width must be positive");
    const std::size_t height = (bytes.size() + width - 1) / width;
    GrayImage img(width, height);
    std::copy(bytes.begin(), bytes.end(), img.pixels.begin());
    return img;
}

inline GrayImage bytes_to_image(const RawBinary& binary, const WidthRule& rule) {
    if (binary.bytes.empty()) throw EmptyInput("'" + binary.source_name + "' is empty");
    return bytes_to_image(binary.bytes, rule.select(binary.bytes.size()));
}

namespace detail {

inline Byte bilinear_sample(const GrayImage& img, double y, double x) {
    const double ymax = static_cast<double>(img.height - 1);
    const double xmax = static_cast<double>(img.width - 1);
    y = std::clamp(y, 0.0, ymax);
    x = std::clamp(x, 0.0, xmax);
    const auto y0 = static_cast<std::size_t>(y);
    const auto x0 = static_cast<std::size_t>(x);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const std::size_t x1 = std::min(x0 + 1, img.width - 1);
    const double wy = y - static_cast<double>(y0);
    const double wx = x - static_cast<double>(x0);
    const double top = img.at(y0, x0) * (1.0 - wx) + img.at(y0, x1) * wx;
    const double bottom = img.at(y1, x0) * (1.0 - wx) + img.at(y1, x1) * wx;
    const double v = top * (1.0 - wy) + bottom * wy;
    return static_cast<Byte>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace detail

/// Resizes to side x side.
///
/// nearest:  out(r, c) = in(floor(r*H/side), floor(c*W/side)).
/// bilinear: pixel-centre alignment (src = (dst + 0.5) * scale - 0.5, clamped
///           to the image), 4-neighbour weights, rounded half-up.
inline GrayImage resize_image(const GrayImage& img, std::size_t side,
                              Interpolation interp = Interpolation::nearest) {
    if (side < 2) throw InvalidArgument("resize side must be >= 2");
    if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height) {
        throw ShapeMismatch("invalid source image");
    }
    GrayImage out(side, side);
    if (interp == Interpolation::nearest) {
        for (std::size_t r = 0; r < side; ++r) {
            const std::size_t sr = r * img.height / side;
            for (std::size_t c = 0; c < side; ++c) {
                out.at(r, c) = img.at(sr, c * img.width / side);
            }
        }
        return out;
    }
    const double sy = static_cast<double>(img.height) / static_cast<double>(side);
    const double sx = static_cast<double>(img.width) / static_cast<double>(side);
    for (std::size_t r = 0; r < side; ++r) {
        const double y = (static_cast<double>(r) + 0.5) * sy - 0.5;
        for (std::size_t c = 0; c < side; ++c) {
            const double x = (static_cast<double>(c) + 0.5) * sx - 0.5;
            out.at(r, c) = detail::bilinear_sample(img, y, x);
        }
    }
    return out;
}

/// Row-major flattening of a side x side image.
inline FeatureVector flatten(const GrayImage& img, std::size_t side) {
    if (img.width != side || img.height != side || img.pixels.size() != side * side) {
        throw ShapeMismatch("expected a " + std::to_string(side) + "x" + std::to_string(side) +
                            " image, got " + std::to_string(img.width) + "x" +
                            std::to_string(img.height));
    }
    return img.pixels;
}

inline GrayImage unflatten(std::span<const Byte> values, std::size_t side) {
    if (values.size() != side * side) {
        throw ShapeMismatch("vector of length " + std::to_string(values.size()) +
                            " is not " + std::to_string(side) + "^2");
    }
    return GrayImage(side, side, std::vector<Byte>(values.begin(), values.end()));
}

inline FeatureVector featurize(const RawBinary& binary, const FeatureConfig& config = {}) {
    config.validate();
    const GrayImage raw = bytes_to_image(binary, config.width_rule);
    return flatten(resize_image(raw, config.side, config.interpolation), config.side);
}

inline RawBinary read_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    RawBinary out;
    out.source_name = path.filename().string();
    out.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error("read failed for '" + path.string() + "'");
    return out;
}

/// Binary PGM: "P5\n<w> <h>\n255\n" then the row-major pixels.
inline std::string export_pgm(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(img.pixels.begin(), img.pixels.end());
    return out;
}

/// Reads a P5 image with maxval 255 (header comments allowed).
inline GrayImage parse_pgm(std::string_view data) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < data.size()) {
            if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* what) {
        skip_space();
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(data.data() + pos, data.data() + data.size(), v);
        if (ec != std::errc{}) throw Error(std::string("PGM: bad ") + what);
        pos = static_cast<std::size_t>(ptr - data.data());
        return v;
    };
    if (data.substr(0, 2) != "P5") throw Error("PGM: missing P5 magic");
    pos = 2;
    const std::size_t w = read_uint("width");
    const std::size_t h = read_uint("height");
    const std::size_t maxval = read_uint("maxval");
    if (maxval != 255) throw Error("PGM: only maxval 255 is supported");
    if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) {
        throw Error("PGM: header not terminated");
    }
    ++pos;
    if (data.size() - pos != w * h) throw Error("PGM: payload size mismatch");
    std::vector<Byte> px(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end());
    return GrayImage(w, h, std::move(px));
}

}  // namespace binsight

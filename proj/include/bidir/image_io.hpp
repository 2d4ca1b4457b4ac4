#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bidir/layers.hpp"
#include "bidir/tensor.hpp"

namespace bidir {

/// Visual dumps as binary PGM (1 channel) / PPM (3 channels). Every image in
/// a grid is min-max normalized to the display range on its own; a constant
/// image maps to mid-gray (0.5). A `.txt` sidecar beside each dump records
/// the per-tile ranges so the normalization stays auditable.

namespace detail {

inline std::uint8_t display_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct TileRange {
    double lo = 0, hi = 0;
    bool degenerate = false;
};

/// Normalizes one {c,h,w} tile in place into [0,1].
template <typename Scalar>
TileRange normalize_tile(Tensor<Scalar>& tile) {
    TileRange r;
    r.lo = static_cast<double>(tile.array().minCoeff());
    r.hi = static_cast<double>(tile.array().maxCoeff());
    if (!(std::isfinite(r.lo) && std::isfinite(r.hi)))
        throw NumericError("image dump: non-finite pixel values");
    if (r.hi - r.lo < 1e-12) {
        r.degenerate = true;
        tile.array().setConstant(Scalar(0.5));
    } else {
        tile.array() = (tile.array() - Scalar(r.lo)) / Scalar(r.hi - r.lo);
    }
    return r;
}

inline void write_pnm(const std::string& path, Index channels, Index height, Index width,
                      const std::vector<std::uint8_t>& pixels) {
    if (channels != 1 && channels != 3)
        throw ValueError("image dump: " + std::to_string(channels) +
                         " channels (only 1 or 3 supported)");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("image dump: cannot open for writing: " + path);
    out << (channels == 1 ? "P5" : "P6") << '\n'
        << width << ' ' << height << '\n'
        << "255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    out.flush();
    if (!out) throw ParseError("image dump: write failed: " + path);
}

inline void write_sidecar(const std::string& path, const std::vector<TileRange>& ranges) {
    std::ofstream out(path + ".txt", std::ios::trunc);
    if (!out) throw ParseError("image dump: cannot open sidecar for writing: " + path + ".txt");
    out << "per-tile min-max normalization to [0,1]; constant tiles map to 0.5\n";
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        out << "tile " << i << ": min=" << ranges[i].lo << " max=" << ranges[i].hi;
        if (ranges[i].degenerate) out << " (constant)";
        out << '\n';
    }
}

}  // namespace detail

/// Writes images of shape {n, c, h, w} as a tiled sheet, `cols` tiles per row
/// (default: all in one row). Returns the number of tiles written.
template <typename Scalar>
Index dump_image_grid(const Tensor<Scalar>& images, const std::string& path, Index cols = 0) {
    if (images.rank() != 4) throw ShapeError("image grid: want {count, channels, h, w}, got " +
                                             shape_str(images.shape()));
    const Index n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    if (n < 1) throw ValueError("image grid: no images");
    if (cols <= 0) cols = n;
    const Index rows = (n + cols - 1) / cols;
    const Index sheet_h = rows * h, sheet_w = cols * w;

    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(c * sheet_h * sheet_w), 0);
    std::vector<detail::TileRange> ranges;
    for (Index i = 0; i < n; ++i) {
        Tensor<Scalar> tile = Tensor<Scalar>::zeros({c, h, w});
        std::copy_n(images.data() + i * c * h * w, c * h * w, tile.data());
        ranges.push_back(detail::normalize_tile(tile));
        const Index r0 = (i / cols) * h, c0 = (i % cols) * w;
        const Scalar* t = tile.data();
        for (Index ch = 0; ch < c; ++ch)
            for (Index y = 0; y < h; ++y)
                for (Index x = 0; x < w; ++x)
                    // PNM wants pixel-interleaved channels
                    pixels[static_cast<std::size_t>(((r0 + y) * sheet_w + (c0 + x)) * c + ch)] =
                        detail::display_byte(static_cast<double>(t[(ch * h + y) * w + x]));
    }
    detail::write_pnm(path, c, sheet_h, sheet_w, pixels);
    detail::write_sidecar(path, ranges);
    return n;
}

/// Writes a single {c,h,w} (or {h,w}) image.
template <typename Scalar>
void dump_image(const Tensor<Scalar>& image, const std::string& path) {
    Tensor<Scalar> img = image;
    if (img.rank() == 2) img = img.reshaped({Index(1), img.dim(0), img.dim(1)});
    if (img.rank() != 3) throw ShapeError("image dump: want {channels, h, w}, got " +
                                          shape_str(image.shape()));
    dump_image_grid(img.reshaped({Index(1), img.dim(0), img.dim(1), img.dim(2)}), path);
}

/// Extracts the first layer's weights as a stack of displayable images:
/// dense -> one {c,h,w} template per output unit (reshaped input weights),
/// conv -> one {in_ch, kh, kw} tile per output channel.
template <typename Scalar>
Tensor<Scalar> first_layer_weight_images(BidirNetwork<Scalar>& net) {
    const Tensor<Scalar>& w = net.weight(0);
    const Shape& in_shape = net.spec().input_shape;
    if (w.rank() == 2) {
        Shape img_shape = in_shape.size() == 3 ? in_shape : Shape{1, 1, in_shape[0]};
        if (in_shape.size() == 1) {
            // render flat inputs as a square when possible
            const auto side = static_cast<Index>(std::lround(std::sqrt(double(in_shape[0]))));
            if (side * side == in_shape[0]) img_shape = {1, side, side};
        }
        if (shape_count(img_shape) != w.dim(1))
            throw ShapeError("weight image: input shape does not cover the weight row");
        return w.reshaped({w.dim(0), img_shape[0], img_shape[1], img_shape[2]});
    }
    return w;  // conv weights are already {oc, ic, kh, kw}
}

}  // namespace bidir

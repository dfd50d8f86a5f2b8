#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlwb/data/dataset.hpp"

namespace mlwb {

/// Undecodable or unsupported image data.
class ImageError : public Error {
public:
    using Error::Error;
};

/// Decodes PNG or JPEG (sniffed from the signature) to [h, w, 3] in [0, 1].
/// Grayscale is replicated to three channels; alpha is composited on white.
Tensor decode_image(const std::vector<std::uint8_t>& bytes, const std::string& name = "image");

/// Bilinear resize of [h, w, c] with half-pixel centres.
Tensor resize_image(const Tensor& image, std::size_t height, std::size_t width);

struct ImageFile {
    std::string label;
    std::string name;
    std::vector<std::uint8_t> bytes;
};

/// X [n, height, width, 3]; Y one-hot over the sorted distinct labels.
Dataset import_images(const std::vector<ImageFile>& files, std::size_t height, std::size_t width);

/// 8-bit PNG of a [h, w] (gray), [h, w, 1] or [h, w, 3] tensor; values clamped to [0, 1].
std::vector<std::uint8_t> encode_png(const Tensor& image);

/// Maps a [h, w] map in [0, 1] to [h, w, 3] running dark blue -> teal -> yellow.
Tensor colorize_heatmap(const Tensor& map);

}  // namespace mlwb

#include "mlwb/data/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <map>
#include <set>

#include <jpeglib.h>

namespace mlwb {

namespace {

bool is_png(const std::vector<std::uint8_t>& b) {
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool is_jpeg(const std::vector<std::uint8_t>& b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

Tensor decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
        throw ImageError("cannot decode PNG '" + name + "': " + image.message);
    }
    // RGBA composited on white below; 8-bit output keeps the decode simple.
    image.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageError("cannot decode PNG '" + name + "': " + msg);
    }
    const std::size_t h = image.height;
    const std::size_t w = image.width;
    auto out = Tensor::zeros({h, w, 3});
    for (std::size_t p = 0; p < h * w; ++p) {
        const float a = pixels[p * 4 + 3] / 255.0f;
        for (std::size_t c = 0; c < 3; ++c) {
            out[p * 3 + c] = (pixels[p * 4 + c] / 255.0f) * a + (1.0f - a);
        }
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
    auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
    (*info->err->format_message)(info, err->message);
    std::longjmp(err->jump, 1);
}

Tensor decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    jpeg_decompress_struct info{};
    JpegErrorManager err{};
    info.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    // Everything touched after setjmp lives outside the C call frames.
    std::vector<std::uint8_t> pixels;
    std::size_t h = 0, w = 0, channels = 0;
    if (setjmp(err.jump) != 0) {
        jpeg_destroy_decompress(&info);
        throw ImageError("cannot decode JPEG '" + name + "': " + err.message);
    }
    jpeg_create_decompress(&info);
    jpeg_mem_src(&info, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&info, TRUE);
    if (info.jpeg_color_space != JCS_GRAYSCALE) {
        info.out_color_space = JCS_RGB;
    }
    jpeg_start_decompress(&info);
    h = info.output_height;
    w = info.output_width;
    channels = static_cast<std::size_t>(info.output_components);
    pixels.resize(h * w * channels);
    while (info.output_scanline < info.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(info.output_scanline) * w * channels;
        jpeg_read_scanlines(&info, &row, 1);
    }
    jpeg_finish_decompress(&info);
    jpeg_destroy_decompress(&info);

    auto out = Tensor::zeros({h, w, 3});
    for (std::size_t p = 0; p < h * w; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            out[p * 3 + c] = pixels[p * channels + (channels == 1 ? 0 : c)] / 255.0f;
        }
    }
    return out;
}

void write_png_chunk(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

std::vector<std::uint8_t> write_png(const std::vector<png_byte>& pixels, const std::size_t h, const std::size_t w,
                                    const std::size_t c) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png)) != 0) {
        png_destroy_write_struct(&png, &info);
        throw ImageError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, write_png_chunk, nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y) {
        png_write_row(png, pixels.data() + y * w * c);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace

Tensor decode_image(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    if (is_png(bytes)) {
        return decode_png(bytes, name);
    }
    if (is_jpeg(bytes)) {
        return decode_jpeg(bytes, name);
    }
    throw ImageError("'" + name + "' is neither a PNG nor a JPEG image");
}

Tensor resize_image(const Tensor& image, std::size_t height, std::size_t width) {
    if (image.rank() != 3) {
        throw ShapeError("resize_image expects [h, w, c], got " + to_string(image.shape()));
    }
    if (height == 0 || width == 0) {
        throw ConfigError("target image size must be positive");
    }
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    auto out = Tensor::zeros({height, width, c});
    auto source = [](std::size_t i, std::size_t from, std::size_t to, std::size_t& lo, std::size_t& hi, double& f) {
        double p = (static_cast<double>(i) + 0.5) * static_cast<double>(from) / static_cast<double>(to) - 0.5;
        p = std::clamp(p, 0.0, static_cast<double>(from - 1));
        lo = static_cast<std::size_t>(p);
        hi = std::min(lo + 1, from - 1);
        f = p - static_cast<double>(lo);
    };
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t y0, y1;
        double fy;
        source(y, h, height, y0, y1, fy);
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t x0, x1;
            double fx;
            source(x, w, width, x0, x1, fx);
            for (std::size_t k = 0; k < c; ++k) {
                const double top = (1 - fx) * image[(y0 * w + x0) * c + k] + fx * image[(y0 * w + x1) * c + k];
                const double bottom = (1 - fx) * image[(y1 * w + x0) * c + k] + fx * image[(y1 * w + x1) * c + k];
                out[(y * width + x) * c + k] = static_cast<float>((1 - fy) * top + fy * bottom);
            }
        }
    }
    return out;
}

Dataset import_images(const std::vector<ImageFile>& files, std::size_t height, std::size_t width) {
    std::set<std::string> distinct;
    for (const auto& f : files) {
        distinct.insert(f.label);
    }
    if (distinct.size() < 2) {
        throw ConfigError("image import needs at least two distinct labels, got " + std::to_string(distinct.size()));
    }
    const std::vector<std::string> labels(distinct.begin(), distinct.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        index[labels[i]] = i;
    }
    std::vector<float> xs;
    xs.reserve(files.size() * height * width * 3);
    auto ys = Tensor::zeros({files.size(), labels.size()});
    for (std::size_t n = 0; n < files.size(); ++n) {
        const Tensor img = resize_image(decode_image(files[n].bytes, files[n].name), height, width);
        xs.insert(xs.end(), img.values().begin(), img.values().end());
        ys[n * labels.size() + index[files[n].label]] = 1.0f;
    }
    Dataset d = make_dataset(Tensor({files.size(), height, width, 3}, std::move(xs)), std::move(ys), DataSource::images);
    d.category_labels = labels;
    return d;
}

std::vector<std::uint8_t> encode_png(const Tensor& image) {
    const bool gray2d = image.rank() == 2;
    if (!gray2d && !(image.rank() == 3 && (image.dim(2) == 1 || image.dim(2) == 3))) {
        throw ShapeError("encode_png expects [h, w], [h, w, 1] or [h, w, 3], got " + to_string(image.shape()));
    }
    std::vector<png_byte> pixels(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const float v = std::isnan(image[i]) ? 0.0f : std::clamp(image[i], 0.0f, 1.0f);
        pixels[i] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    return write_png(pixels, image.dim(0), image.dim(1), gray2d ? 1 : image.dim(2));
}

Tensor colorize_heatmap(const Tensor& map) {
    if (map.rank() != 2) {
        throw ShapeError("colorize_heatmap expects [h, w], got " + to_string(map.shape()));
    }
    static const float stops[3][3] = {{0.27f, 0.00f, 0.33f}, {0.13f, 0.57f, 0.55f}, {0.99f, 0.91f, 0.14f}};
    auto out = Tensor::zeros({map.dim(0), map.dim(1), 3});
    for (std::size_t i = 0; i < map.size(); ++i) {
        const float v = std::clamp(map[i], 0.0f, 1.0f) * 2.0f;
        const std::size_t lo = v >= 1.0f ? 1 : 0;
        const float f = v - static_cast<float>(lo);
        for (std::size_t k = 0; k < 3; ++k) {
            out[i * 3 + k] = stops[lo][k] + f * (stops[lo + 1][k] - stops[lo][k]);
        }
    }
    return out;
}

}  // namespace mlwb

#include <doctest.h>

#include <png.h>

#include <cstdio>
#include <random>

#include <jpeglib.h>

#include "mlwb/data/csv.hpp"
#include "mlwb/data/image.hpp"
#include "mlwb/data/tensor_literal.hpp"
#include "oracles/literal.hpp"
#include "support/literal_gen.hpp"

using namespace mlwb;

namespace {

std::vector<std::uint8_t> rgba_png(std::size_t w, std::size_t h, const std::vector<std::uint8_t>& rgba) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGBA;
    png_alloc_size_t size = 0;
    REQUIRE(png_image_write_to_memory(&image, nullptr, &size, 0, rgba.data(), 0, nullptr) != 0);
    std::vector<std::uint8_t> out(size);
    REQUIRE(png_image_write_to_memory(&image, out.data(), &size, 0, rgba.data(), 0, nullptr) != 0);
    out.resize(size);
    return out;
}

std::vector<std::uint8_t> gray_jpeg(std::size_t w, std::size_t h, std::uint8_t value) {
    jpeg_compress_struct info{};
    jpeg_error_mgr err{};
    info.err = jpeg_std_error(&err);
    jpeg_create_compress(&info);
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    jpeg_mem_dest(&info, &buffer, &size);
    info.image_width = static_cast<JDIMENSION>(w);
    info.image_height = static_cast<JDIMENSION>(h);
    info.input_components = 1;
    info.in_color_space = JCS_GRAYSCALE;
    jpeg_set_defaults(&info);
    jpeg_set_quality(&info, 100, TRUE);
    jpeg_start_compress(&info, TRUE);
    std::vector<std::uint8_t> row(w, value);
    while (info.next_scanline < info.image_height) {
        JSAMPROW r = row.data();
        jpeg_write_scanlines(&info, &r, 1);
    }
    jpeg_finish_compress(&info);
    std::vector<std::uint8_t> out(buffer, buffer + size);
    jpeg_destroy_compress(&info);
    std::free(buffer);
    return out;
}

}  // namespace

TEST_CASE("csv basic parse") {
    const Dataset d = parse_csv("a,b,t\n1,2,3\n4,5,6", {.input_columns = {"a", "b"}, .target_columns = {"t"}});
    CHECK(d.x == Tensor({2, 2}, {1, 2, 4, 5}));
    CHECK(d.y == Tensor({2, 1}, {3, 6}));
    CHECK(d.input_columns == std::vector<std::string>{"a", "b"});
    CHECK(d.source == DataSource::csv);

    const Dataset px = parse_csv("p,q\n255,1\n0,0\n", {.input_columns = {"p"}, .target_columns = {"q"}, .divisors = {{"p", 255}}});
    CHECK(px.x[0] == 1.0f);

    const Dataset semi = parse_csv("a;b\r\n1;true\r\n2;false\r\n", {.separator = ';', .input_columns = {"a"}, .target_columns = {"b"}});
    CHECK(semi.y == Tensor({2, 1}, {1, 0}));

    const Dataset quoted = parse_csv("\"col, one\",\"t\"\"\"\n\"7\",8\n",
                                     {.input_columns = {"col, one"}, .target_columns = {"t\""}});
    CHECK(quoted.x[0] == 7.0f);
    CHECK(quoted.y[0] == 8.0f);
}

TEST_CASE("csv errors") {
    CsvImportConfig cfg{.input_columns = {"a"}, .target_columns = {"z"}};
    try {
        parse_csv("a,b\n1,2\n", cfg);
        FAIL("expected error");
    } catch (const CsvError& e) {
        CHECK(std::string(e.what()).find("'z'") != std::string::npos);
    }
    cfg.target_columns = {"b"};
    try {
        parse_csv("a,b\n1,2\n3,x\n", cfg);
        FAIL("expected error");
    } catch (const CsvError& e) {
        CHECK(e.row() == 3);
        CHECK(e.column() == "b");
    }
    try {
        parse_csv("a,b\n1,2\n3\n", cfg);
        FAIL("expected error");
    } catch (const CsvError& e) {
        CHECK(e.row() == 3);
    }
    CHECK_THROWS_AS(parse_csv("a,b\n1,2\n", {.input_columns = {"a"}, .target_columns = {"a"}}), ConfigError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,2\n", {.input_columns = {}, .target_columns = {"a"}}), ConfigError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,2\n", {.input_columns = {"a"}, .target_columns = {"b"}, .divisors = {{"a", 0.0}}}),
                    ConfigError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,2\n", {.input_columns = {"a"}, .target_columns = {"b"}, .divisors = {{"c", 2.0}}}),
                    CsvError);
    CHECK_THROWS_AS(parse_csv("a,b\n\"1,2\n", cfg), CsvError);
    CHECK_THROWS_AS(parse_csv("", cfg), CsvError);
    CHECK_THROWS_AS(parse_csv("a,b\n", cfg), CsvError);
}

TEST_CASE("csv round trip and divisor properties") {
    std::mt19937_64 rng(31);
    std::normal_distribution<float> nd(0.0f, 100.0f);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 8, nx = 1 + rng() % 4, ny = 1 + rng() % 3;
        std::vector<float> xs(n * nx), ys(n * ny);
        for (auto& v : xs) {
            v = nd(rng);
        }
        for (auto& v : ys) {
            v = rng() % 3 == 0 ? static_cast<float>(rng() % 2) : nd(rng);
        }
        Dataset d = make_dataset(Tensor({n, nx}, xs), Tensor({n, ny}, ys), DataSource::csv);
        for (std::size_t i = 0; i < nx; ++i) {
            d.input_columns.push_back("in " + std::to_string(i));
        }
        for (std::size_t i = 0; i < ny; ++i) {
            d.target_columns.push_back(i == 0 ? "t,\"q\"" : "t" + std::to_string(i));
        }
        const char sep = trial % 2 ? ',' : ';';
        const std::string text = serialize_csv(d, sep);
        const Dataset back = parse_csv(text, {.separator = sep, .input_columns = d.input_columns, .target_columns = d.target_columns});
        CHECK(bit_equal(back.x, d.x));
        CHECK(bit_equal(back.y, d.y));
        CHECK(serialize_csv(back, sep) == text);

        const double divisor = 0.5 + static_cast<double>(rng() % 1000) / 7.0;
        const Dataset scaled = parse_csv(text, {.separator = sep,
                                                .input_columns = d.input_columns,
                                                .target_columns = d.target_columns,
                                                .divisors = {{d.input_columns[0], divisor}}});
        for (std::size_t r = 0; r < n; ++r) {
            const double expect = static_cast<double>(d.x[r * nx]) / divisor;
            CHECK(std::abs(scaled.x[r * nx] - expect) <= 1e-7 * std::max(1.0, std::abs(expect)));
        }
    }
}

TEST_CASE("tensor literal examples") {
    const Tensor b = parse_tensor_literal("[[true, false]]");
    CHECK(b.shape() == Shape{1, 2});
    CHECK(b[0] == 1.0f);
    CHECK(b[1] == 0.0f);
    CHECK(parse_tensor_literal("[1, 2.5, -3]") == Tensor({3}, {1, 2.5f, -3}));
    CHECK(parse_tensor_literal(" 4e1 ").shape() == Shape{});
    try {
        parse_tensor_literal("[[1],[2,3]]");
        FAIL("expected ragged error");
    } catch (const ParseError& e) {
        CHECK(e.path() == "[1]");
    }
    try {
        parse_tensor_literal("[1, [2]]");
        FAIL("expected ragged error");
    } catch (const ParseError& e) {
        CHECK(e.path() == "[1]");
    }
    try {
        parse_tensor_literal("[1, 2] x");
        FAIL("expected trailing error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 7);
    }
    CHECK_THROWS_AS(parse_tensor_literal("[]"), ParseError);
    CHECK_THROWS_AS(parse_tensor_literal("[1,]"), ParseError);
    CHECK_THROWS_AS(parse_tensor_literal("[1.]"), ParseError);
    CHECK_THROWS_AS(parse_tensor_literal("[1e]"), ParseError);
    CHECK_THROWS_AS(parse_tensor_literal("[1e99]"), ParseError);
    CHECK_THROWS_AS(parse_tensor_literal(""), ParseError);
    CHECK_THROWS_AS(parse_tensor_literal("[tru]"), ParseError);

    const Tensor t({2, 3}, {0.1f, -2, 3e-7f, 4, 5, 6.25f});
    CHECK(bit_equal(parse_tensor_literal(format_tensor_literal(t)), t));
}

TEST_CASE("tensor literal parser agrees with the reference reader") {
    std::mt19937_64 rng(77);
    std::size_t valid = 0, invalid = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::string text = testsupport::random_literal(rng, testsupport::random_shape(rng));
        if (trial % 3 == 2) {
            text = testsupport::mutate(rng, text);
        }
        const oracle::LiteralResult expected = oracle::read_literal(text);
        if (expected.ok) {
            ++valid;
            const Tensor got = parse_tensor_literal(text);
            CHECK(got.shape() == expected.shape);
            CHECK(got.values() == expected.values);
        } else {
            ++invalid;
            CHECK_THROWS_AS(parse_tensor_literal(text), ParseError);
        }
    }
    CHECK(valid > 600);
    CHECK(invalid > 100);
}

TEST_CASE("image decode, resize and import") {
    // 2x1: opaque red, fully transparent black (composited on white)
    const auto png = rgba_png(2, 1, {255, 0, 0, 255, 0, 0, 0, 0});
    const Tensor img = decode_image(png, "a.png");
    CHECK(img.shape() == Shape{1, 2, 3});
    CHECK(img == Tensor({1, 2, 3}, {1, 0, 0, 1, 1, 1}));

    const Tensor gray = decode_image(encode_png(Tensor({1, 2}, {1.0f, 0.0f})), "g.png");
    CHECK(gray == Tensor({1, 2, 3}, {1, 1, 1, 0, 0, 0}));

    const Tensor jpeg = decode_image(gray_jpeg(8, 8, 255), "w.jpg");
    CHECK(jpeg.shape() == Shape{8, 8, 3});
    for (float v : jpeg.values()) {
        CHECK(v == 1.0f);
    }

    CHECK_THROWS_AS(decode_image({1, 2, 3, 4}, "junk.bin"), ImageError);
    try {
        auto broken = png;
        broken.resize(20);
        decode_image(broken, "broken.png");
        FAIL("expected ImageError");
    } catch (const ImageError& e) {
        CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
    }

    const Tensor up = resize_image(Tensor({1, 2, 1}, {0, 1}), 1, 4);
    CHECK(up == Tensor({1, 4, 1}, {0, 0.25f, 0.75f, 1}));

    const std::vector<ImageFile> files{{"dog", "d.png", png},
                                       {"cat", "c.png", encode_png(Tensor::filled({3, 3}, 0.5f))},
                                       {"emu", "e.jpg", gray_jpeg(4, 4, 255)},
                                       {"cat", "c2.png", png}};
    const Dataset d = import_images(files, 5, 6);
    CHECK(d.x.shape() == Shape{4, 5, 6, 3});
    CHECK(d.y.shape() == Shape{4, 3});
    CHECK(d.category_labels == std::vector<std::string>{"cat", "dog", "emu"});
    CHECK(d.y == Tensor({4, 3}, {0, 1, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0}));
    for (float v : d.x.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK(target_info(d).kind == TargetInfo::Kind::categorical);
    CHECK(target_info(d).count == 3);

    CHECK_THROWS_AS(import_images({{"one", "a.png", png}, {"one", "b.png", png}}, 2, 2), ConfigError);
    try {
        import_images({{"a", "ok.png", png}, {"b", "bad.png", {0}}}, 2, 2);
        FAIL("expected ImageError");
    } catch (const ImageError& e) {
        CHECK(std::string(e.what()).find("bad.png") != std::string::npos);
    }
}

TEST_CASE("png encode round trip and heatmap colors") {
    const Tensor rgb({2, 2, 3}, {0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1});
    CHECK(decode_image(encode_png(rgb)) == rgb);
    CHECK_THROWS_AS(encode_png(Tensor::zeros({2, 2, 2})), ShapeError);
    const Tensor c = colorize_heatmap(Tensor({1, 2}, {0, 1}));
    CHECK(c.shape() == Shape{1, 2, 3});
    CHECK(c[3] > 0.9f);  // yellow end: strong red
    CHECK(c[4] > 0.85f);  // and green
}

TEST_CASE("preview and dataset json") {
    const Dataset d = xor_dataset();
    const DatasetPreview none = preview(d, 0);
    CHECK(none.x_rows.empty());
    CHECK(none.total_rows == 4);
    CHECK(none.x_shape == Shape{4, 2});
    CHECK(preview(d, 10).x_rows.size() == 4);
    const DatasetPreview two = preview(d, 2);
    CHECK(two.x_rows[1] == Tensor({2}, {0, 1}));
    CHECK(two.y_rows[1] == Tensor({1}, {1}));
    CHECK(to_json(two)["x_rows"].size() == 2);

    const Dataset back = dataset_from_json(to_json(d));
    CHECK(bit_equal(back.x, d.x));
    CHECK(back.input_columns == d.input_columns);
    CHECK(back.source == DataSource::builtin);
    CHECK_THROWS_AS(dataset_from_json({{"x", to_json(d)["x"]}}), ParseError);
    CHECK_THROWS_AS(make_dataset(Tensor::zeros({3, 1}), Tensor::zeros({2, 1}), DataSource::csv), ShapeError);

    const TargetInfo xt = target_info(d);
    CHECK(xt.kind == TargetInfo::Kind::regression);
    CHECK(xt.unit_range);
}

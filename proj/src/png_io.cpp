#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "dear/imaging.hpp"

namespace dear {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Image read_image(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw io_error("cannot open for reading: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw io_error("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("libpng read error: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("unsupported bit depth 16: " + path);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("unsupported channel count after decode: " + path);
    }

    std::vector<png_byte> rowbuf(size_t(w) * size_t(channels));
    Image img(int(h), int(w), channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(int(y), int(x), c) = rowbuf[size_t(x) * channels + size_t(c)] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_image(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw invalid_argument_error("write_image: only 1- or 3-channel images supported");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw io_error("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw io_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("libpng write error: " + path);
    }
    png_init_io(png, fp.get());
    // fixed settings keep output bytes reproducible across runs
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> rowbuf(size_t(img.width) * size_t(img.channels));
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = clamp01(img.at(y, x, c));
                rowbuf[size_t(x) * img.channels + size_t(c)] =
                    png_byte(std::lround(v * 255.0));
            }
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Mask read_mask(const std::string& path) {
    Image img = read_image(path);
    Mask mask(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double v = img.at(y, x, 0);
            if (img.channels == 3) v = (v + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
            mask.at(y, x) = v >= 0.5 ? 1 : 0;
        }
    return mask;
}

void write_mask(const Mask& mask, const std::string& path) {
    Image img(mask.height, mask.width, 1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) img.at(y, x, 0) = mask.at(y, x) ? 1.0 : 0.0;
    write_image(img, path);
}

}  // namespace dear

#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "mgnet/common.hpp"
#include "mgnet/tensor.hpp"

namespace mgnet {

// Reads an 8-bit RGB image (PNG or binary PPM) into a (1, 3, h, w) tensor
// with values in [0, 255]. The format is sniffed from the file signature.
inline Tensor read_image(const std::string& path);

namespace detail {

inline Tensor read_ppm(std::ifstream& f, const std::string& path) {
    auto next_token = [&]() -> std::string {
        std::string tok;
        char ch;
        while (f.get(ch)) {
            if (ch == '#') {
                while (f.get(ch) && ch != '\n') {}
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(ch);
        }
        return tok;
    };
    std::string magic = next_token();
    if (magic != "P6") throw FormatError("read_image: not a P6 PPM: " + path);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw FormatError("read_image: bad PPM header in " + path);
    }
    if (w < 1 || h < 1 || maxval != 255)
        throw FormatError("read_image: unsupported PPM dimensions/maxval in " + path);
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(f.gcount()) != buf.size())
        throw FormatError("read_image: truncated PPM pixel data in " + path);
    Tensor t(1, 3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(0, c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c];
    return t;
}

inline Tensor read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("read_image: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("read_image: libpng init failed");
    }
    std::vector<png_bytep> rows;
    std::vector<unsigned char> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError("read_image: PNG decode error in " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    size_t rowbytes = png_get_rowbytes(png, info);
    pixels.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    if (rowbytes < static_cast<size_t>(w) * 3)
        throw FormatError("read_image: unexpected PNG row layout in " + path);
    Tensor t(1, 3, static_cast<int>(h), static_cast<int>(w));
    for (png_uint_32 y = 0; y < h; ++y)
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(0, c, static_cast<int>(y), static_cast<int>(x)) =
                    pixels[y * rowbytes + static_cast<size_t>(x) * 3 + c];
    return t;
}

}  // namespace detail

inline Tensor read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_image: cannot open " + path);
    char sig[2] = {0, 0};
    f.read(sig, 2);
    f.seekg(0);
    if (sig[0] == 'P' && sig[1] == '6') return detail::read_ppm(f, path);
    f.close();
    return detail::read_png(path);
}

// Binary PGM (P5), 8-bit grayscale.
inline void write_pgm(const std::string& path, const std::vector<unsigned char>& pixels, int w,
                      int h) {
    if (static_cast<size_t>(w) * h != pixels.size())
        throw ValidationError("write_pgm: pixel count does not match dimensions");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_pgm: cannot open " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
    if (!f) throw IoError("write_pgm: write failed for " + path);
}

// Binary PPM (P6), 8-bit RGB, from a (1, 3, h, w) tensor with values in
// [0, 255]. Fixture helper for detect inputs.
inline void write_ppm(const std::string& path, const Tensor& t) {
    if (t.n != 1 || t.c != 3) throw ValidationError("write_ppm: expected (1,3,h,w) tensor");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_ppm: cannot open " + path);
    f << "P6\n" << t.w << " " << t.h << "\n255\n";
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(t.at(0, c, y, x), 0.0f, 255.0f);
                f.put(static_cast<char>(static_cast<int>(v + 0.5f)));
            }
    if (!f) throw IoError("write_ppm: write failed for " + path);
}

}  // namespace mgnet

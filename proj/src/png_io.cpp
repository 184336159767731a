#include "mgan/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "mgan/errors.hpp"

namespace mgan {
namespace {

struct MemReader {
    const std::vector<uint8_t>* bytes;
    size_t pos;
};

void mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->bytes->size()) png_error(png, "unexpected end of PNG stream");
    std::memcpy(out, r->bytes->data() + r->pos, n);
    r->pos += n;
}

void mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void mem_flush(png_structp) {}

std::vector<uint16_t> to_u16(const ImageGrid& grid) {
    std::vector<uint16_t> px(grid.pixel_count());
    for (size_t i = 0; i < px.size(); ++i) px[i] = quantize16(grid.values[i]);
    return px;
}

void encode_rows(png_structp png, png_infop info, const ImageGrid& grid) {
    png_set_IHDR(png, info, grid.width, grid.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png);  // little-endian host -> PNG network order
    const auto px = to_u16(grid);
    for (int r = 0; r < grid.height; ++r)
        png_write_row(png, reinterpret_cast<png_const_bytep>(px.data() + size_t(r) * grid.width));
    png_write_end(png, nullptr);
}

ImageGrid decode_rows(png_structp png, png_infop info, ImageKind kind, const std::string& what) {
    png_read_info(png, info);
    const int width = int(png_get_image_width(png, info));
    const int height = int(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || depth != 16)
        throw InputError(what + ": expected 16-bit grayscale PNG, got color type " +
                         std::to_string(color) + " depth " + std::to_string(depth));
    png_set_swap(png);
    ImageGrid grid(height, width);
    std::vector<uint16_t> row(size_t(width), 0);
    for (int r = 0; r < height; ++r) {
        png_read_row(png, reinterpret_cast<png_bytep>(row.data()), nullptr);
        for (int c = 0; c < width; ++c) grid.at(r, c) = dequantize16(row[c]);
    }
    png_read_end(png, nullptr);
    if (kind == ImageKind::Label) {
        for (double v : grid.values)
            if (v != 0.0 && v != 1.0)
                throw ValidationError(what + ": non-binary label pixel value " + std::to_string(v));
    }
    return grid;
}

}  // namespace

std::vector<uint8_t> encode_png(const ImageGrid& grid) {
    std::vector<uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("PNG encode failed");
    }
    png_set_write_fn(png, &out, mem_write, mem_flush);
    encode_rows(png, info, grid);
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageGrid decode_png(const std::vector<uint8_t>& bytes, ImageKind kind) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    MemReader reader{&bytes, 0};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("corrupt PNG stream");
    }
    png_set_read_fn(png, &reader, mem_read);
    try {
        ImageGrid grid = decode_rows(png, info, kind, "PNG stream");
        png_destroy_read_struct(&png, &info, nullptr);
        return grid;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

void save_image(const ImageGrid& grid, const std::filesystem::path& path) {
    const auto bytes = encode_png(grid);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw InputError("failed writing " + path.string());
}

ImageGrid read_image(const std::filesystem::path& path, ImageKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open image file " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    MemReader reader{&bytes, 0};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("corrupt PNG file " + path.string());
    }
    png_set_read_fn(png, &reader, mem_read);
    try {
        ImageGrid grid = decode_rows(png, info, kind, path.string());
        png_destroy_read_struct(&png, &info, nullptr);
        return grid;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

}  // namespace mgan

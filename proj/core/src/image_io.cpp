#include "lowlight/image_io.hpp"

#include <png.h>

#include <csetjmp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lowlight/error.hpp"

namespace lowlight {

namespace {

// libpng reports errors through longjmp; the message is kept for the throw
// that follows.
void on_png_error(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("encode_png: expected 1 or 3 channels, got " +
                     std::to_string(image.channels));
  }
  if (image.width <= 0 || image.height <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "encode_png: empty image");
  }
  const int c = image.channels, h = image.height, w = image.width;
  std::vector<std::uint8_t> interleaved(static_cast<std::size_t>(c) * h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const float v = std::clamp(image.at(k, y, x), 0.0f, 1.0f);
        interleaved[(static_cast<std::size_t>(y) * w + x) * c + k] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }

  std::vector<std::uint8_t> out;
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error,
                                            on_png_warning);
  if (!png) throw Error(ErrorKind::kInvariant, "png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png: " + message);
  }
  {
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t n) {
          auto* dst = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
          dst->insert(dst->end(), data, data + n);
        },
        nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y) {
      png_write_row(png, interleaved.data() + static_cast<std::size_t>(y) * w * c);
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("png: bad signature");
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error,
                                           on_png_warning);
  if (!png) throw Error(ErrorKind::kInvariant, "png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  Image image;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png: " + message);
  }
  {
    png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t n) {
      auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(p));
      if (cur->bytes->size() - cur->pos < n) png_error(p, "truncated stream");
      std::memcpy(data, cur->bytes->data() + cur->pos, n);
      cur->pos += n;
    });
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = png_get_channels(png, info);
    row.assign(static_cast<std::size_t>(w) * c, 0);
    image = Image(c, h, w);
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < w; ++x) {
        for (int k = 0; k < c; ++k) image.at(k, y, x) = row[static_cast<std::size_t>(x) * c + k] / 255.0f;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

}  // namespace lowlight

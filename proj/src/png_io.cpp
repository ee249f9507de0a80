// SPDX-License-Identifier: Apache-2.0
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cellgrade/errors.hpp"
#include "cellgrade/imaging.hpp"

namespace cellgrade::imaging {
namespace {

struct ReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
  char message[256] = {};
  bool unsupported = false;
  std::string unsupported_what;
};

void on_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<ReadState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

void read_bytes(png_structp png, png_bytep out, png_size_t n) {
  auto* state = static_cast<ReadState*>(png_get_io_ptr(png));
  if (state->offset + n > state->bytes.size()) {
    png_error(png, "unexpected end of data");
  }
  std::memcpy(out, state->bytes.data() + state->offset, n);
  state->offset += n;
}

struct WriteState {
  std::vector<std::uint8_t>* out;
  char message[256] = {};
};

void write_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* state = static_cast<WriteState*>(png_get_io_ptr(png));
  state->out->insert(state->out->end(), data, data + n);
}

void on_write_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<WriteState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  png_longjmp(png, 1);
}

void flush_noop(png_structp) {}

}  // namespace

PixelImage decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw DecodeError("not a PNG stream: bad signature at offset 0");
  }

  // Everything with a destructor lives above setjmp so a longjmp back here
  // never skips one.
  ReadState state;
  state.bytes = bytes;
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  PixelImage img;

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, on_error, on_warning);
  if (!png) throw DecodeError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("libpng initialisation failed");
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    if (state.unsupported) throw UnsupportedFormatError(state.unsupported_what);
    throw DecodeError(std::string("malformed PNG: ") + state.message +
                      " (at byte offset " + std::to_string(state.offset) + ")");
  }

  png_set_read_fn(png, &state, read_bytes);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  } else if (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGB_ALPHA) {
    state.unsupported = true;
    state.unsupported_what = "unsupported PNG colour type " + std::to_string(color) +
                       " (only RGB/RGBA are accepted)";
    png_error(png, "unsupported");
  }
  if (color != PNG_COLOR_TYPE_PALETTE && depth != 8) {
    state.unsupported = true;
    state.unsupported_what = "unsupported PNG bit depth " + std::to_string(depth) +
                       " (only 8-bit channels are accepted)";
    png_error(png, "unsupported");
  }
  if (color == PNG_COLOR_TYPE_PALETTE && png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(width) * 3) {
    state.unsupported = true;
    state.unsupported_what = "unsupported PNG pixel layout";
    png_error(png, "unsupported");
  }
  raw.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = PixelImage(width, height);
  std::transform(raw.begin(), raw.end(), img.values.begin(),
                 [](std::uint8_t c) { return static_cast<double>(c) / 255.0; });
  return img;
}

PixelImage decode_image_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    if (dynamic_cast<const UnsupportedFormatError*>(&e)) {
      throw UnsupportedFormatError(path + ": " + e.what());
    }
    throw DecodeError(path + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const PixelImage& img) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> raw(img.values.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(img.values[i], 0.0, 1.0);
    raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    rows[y] = raw.data() + y * img.width * 3;
  }
  WriteState state{&out};

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state,
                                            on_write_error, on_warning);
  if (!png) throw Error("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(std::string("PNG encode failed: ") + state.message);
  }
  png_set_write_fn(png, &state, write_bytes, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace cellgrade::imaging

#include "usf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "GRAYF64 writer assumes a little-endian host");

namespace usf::img {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError(path + ": " + what);
}

int read_pnm_value(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF) fail(path, "truncated header");
  int value = 0;
  bool any = false;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    any = true;
    ch = in.get();
  }
  if (!any) fail(path, "malformed header");
  return value;
}

RgbImage read_pnm(const std::string& path, bool gray) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[2];
  in.read(magic, 2);
  const int w = read_pnm_value(in, path);
  const int h = read_pnm_value(in, path);
  const int maxval = read_pnm_value(in, path);
  if (maxval != 255) fail(path, "only 8-bit images supported");
  if (h <= 0 || w <= 0) fail(path, "bad dimensions");
  const size_t n = static_cast<size_t>(h) * w * (gray ? 1 : 3);
  std::vector<uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) fail(path, "truncated pixel data");
  RgbImage img(h, w);
  if (gray) {
    for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i)
      img.px[i * 3] = img.px[i * 3 + 1] = img.px[i * 3 + 2] = buf[i];
  } else {
    img.px = std::move(buf);
  }
  return img;
}

RgbImage read_png_file(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail(path, "cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "png init failed");
  }
  std::vector<png_bytep> rows;
  RgbImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "corrupt PNG");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img = RgbImage(static_cast<int>(h), static_cast<int>(w));
  rows.resize(h);
  for (png_uint_32 r = 0; r < h; ++r)
    rows[r] = img.px.data() + static_cast<size_t>(r) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

RgbImage read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail(path, "cannot open");
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (!png_sig_cmp(sig, 0, 8)) return read_png_file(path);
  if (sig[0] == 'P' && sig[1] == '6') return read_pnm(path, false);
  if (sig[0] == 'P' && sig[1] == '5') return read_pnm(path, true);
  fail(path, "unsupported image format (PNG, P5 and P6 accepted)");
}

void write_png(const std::string& path, const RgbImage& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "png write failed");
  }
  png_init_io(png, f.get());
  // Pinned encoder settings so identical pixels give identical bytes.
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_SUB);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.h; ++r)
    png_write_row(png, const_cast<png_bytep>(img.px.data() + static_cast<size_t>(r) * img.w * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::string& path, const GrayImage& img) {
  double lo = img.px[0], hi = img.px[0];
  for (double v : img.px) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.w));
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) {
      const double t = span > 0.0 ? (img.at(r, c) - lo) / span : 0.0;
      row[static_cast<size_t>(c)] = static_cast<uint8_t>(std::lround(t * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), img.w);
  }
  if (!out) fail(path, "write failed");
}

void write_grayf64(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out.write("GRAYF64", 7);
  const uint32_t h = static_cast<uint32_t>(img.h), w = static_cast<uint32_t>(img.w);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size() * sizeof(double)));
  if (!out) fail(path, "write failed");
}

GrayImage read_grayf64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[7];
  in.read(magic, 7);
  if (in.gcount() != 7 || std::memcmp(magic, "GRAYF64", 7) != 0)
    fail(path, "not a GRAYF64 container");
  uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  if (!in || h == 0 || w == 0 || h > 1u << 20 || w > 1u << 20) fail(path, "bad dimensions");
  GrayImage img(static_cast<int>(h), static_cast<int>(w));
  in.read(reinterpret_cast<char*>(img.px.data()),
          static_cast<std::streamsize>(img.px.size() * sizeof(double)));
  if (static_cast<size_t>(in.gcount()) != img.px.size() * sizeof(double))
    fail(path, "truncated payload");
  return img;
}

}  // namespace usf::img

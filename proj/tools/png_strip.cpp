#include "png_strip.hpp"

#include "lgv/errors.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace lgv::cli {

namespace {

constexpr std::array<std::array<double, 3>, 3> kTints{{{1.0, 0.25, 0.25}, {0.25, 1.0, 0.25}, {0.25, 0.45, 1.0}}};
constexpr unsigned char kBorder = 128;

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void write_strip_png(const std::string& path, const std::vector<std::vector<Frame>>& rows) {
  if (rows.empty() || rows.front().empty() || rows.front().front().empty()) throw ConfigError("image strip is empty");
  const Image& ref = rows.front().front().front();
  const int h = static_cast<int>(ref.rows()), w = static_cast<int>(ref.cols());
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  const int width = static_cast<int>(cols) * (w + 1) + 1;
  const int height = static_cast<int>(rows.size()) * (h + 1) + 1;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * 3, kBorder);

  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    for (std::size_t ci = 0; ci < rows[ri].size(); ++ci) {
      const Frame& frame = rows[ri][ci];
      const int y0 = static_cast<int>(ri) * (h + 1) + 1, x0 = static_cast<int>(ci) * (w + 1) + 1;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          std::array<double, 3> rgb{0.0, 0.0, 0.0};
          for (std::size_t b = 0; b < frame.size(); ++b) {
            if (frame[b].rows() != h || frame[b].cols() != w) throw ConfigError("image strip frames differ in size");
            const double v = std::clamp(frame[b](y, x), 0.0, 1.0);
            for (int k = 0; k < 3; ++k) rgb[static_cast<std::size_t>(k)] += frame.size() == 1 ? v : v * kTints[b % 3][static_cast<std::size_t>(k)];
          }
          unsigned char* px = &pixels[(static_cast<std::size_t>(y0 + y) * width + static_cast<std::size_t>(x0 + x)) * 3];
          for (int k = 0; k < 3; ++k) px[k] = static_cast<unsigned char>(std::lround(255.0 * std::min(1.0, rgb[static_cast<std::size_t>(k)])));
        }
      }
    }
  }

  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) png_write_row(png, &pixels[static_cast<std::size_t>(y) * width * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace lgv::cli

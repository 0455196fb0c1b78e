#include "htcan/image_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

#include "htcan/ensemble.hpp"

namespace htcan {

template <typename T>
Tensor<T> read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  const std::int64_t h = img.height;
  const std::int64_t w = img.width;
  Tensor<T> out(Shape{1, 3, h, w});
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        out(0, c, y, x) = static_cast<T>(buf[static_cast<std::size_t>((y * w + x) * 3 + c)]) /
                          static_cast<T>(255);
      }
    }
  }
  return out;
}

template <typename T>
void write_png(const std::filesystem::path& path, const Tensor<T>& image) {
  const Shape& s = image.shape();
  if (s.n() != 1 || s.c() != 3) {
    throw ShapeError("write_png: expected a (1, 3, h, w) image, got " + s.str());
  }
  std::vector<png_byte> buf(static_cast<std::size_t>(s.h() * s.w() * 3));
  for (std::int64_t y = 0; y < s.h(); ++y) {
    for (std::int64_t x = 0; x < s.w(); ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        buf[static_cast<std::size_t>((y * s.w() + x) * 3 + c)] =
            quantize_u8(static_cast<double>(image(0, c, y, x)));
      }
    }
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(s.w());
  img.height = static_cast<png_uint_32>(s.h());
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

template Tensor<float> read_png(const std::filesystem::path&);
template Tensor<double> read_png(const std::filesystem::path&);
template void write_png(const std::filesystem::path&, const Tensor<float>&);
template void write_png(const std::filesystem::path&, const Tensor<double>&);

}  // namespace htcan

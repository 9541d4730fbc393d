#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gr {

/// Row-major interleaved image.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{}) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  T& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  const T& at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  T* pixel(std::size_t p) { return data.data() + p * channels; }
  const T* pixel(std::size_t p) const { return data.data() + p * channels; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<double>;

/// 8-bit PNG with 1 (gray), 3 (RGB) or 4 (RGBA) channels.
ImageU8 read_png(const std::filesystem::path& path);
void write_png(const ImageU8& image, const std::filesystem::path& path);

/// round(255 * clamp(v, 0, 1)) per channel.
ImageU8 to_u8(const ImageF& image);
ImageF to_float(const ImageU8& image);

/// PSNR in dB for values in [0, 1], optionally restricted to pixels where mask > 0.5.
double psnr(const ImageF& a, const ImageF& b, const ImageF* mask = nullptr);

}  // namespace gr

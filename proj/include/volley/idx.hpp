#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "volley/errors.hpp"
#include "volley/matrix.hpp"

namespace volley {

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw TruncatedFile(path + ": ended inside the header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// IDX image file -> one flattened image per row, pixels scaled into [0,1].
inline Matrix load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path);
  const auto magic = detail::read_u32_be(in, path);
  if (magic != kIdxImageMagic)
    throw BadMagic(path + ": image magic mismatch (got 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + ")");
  const std::uint32_t count = detail::read_u32_be(in, path);
  const std::uint32_t rows = detail::read_u32_be(in, path);
  const std::uint32_t cols = detail::read_u32_be(in, path);
  const std::size_t pixels = std::size_t(count) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels)))
    throw TruncatedFile(path + ": ended before " + std::to_string(pixels) + " pixels");
  Matrix m(count, std::size_t(rows) * cols);
  for (std::size_t i = 0; i < pixels; ++i) m.values()[i] = raw[i] / 255.0;
  return m;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path);
  const auto magic = detail::read_u32_be(in, path);
  if (magic != kIdxLabelMagic) throw BadMagic(path + ": label magic mismatch");
  const std::uint32_t count = detail::read_u32_be(in, path);
  std::vector<unsigned char> raw(count);
  if (!in.read(reinterpret_cast<char*>(raw.data()), count))
    throw TruncatedFile(path + ": ended before " + std::to_string(count) + " labels");
  return {raw.begin(), raw.end()};
}

// Writers round-trip the loaders (pixels quantized to bytes); used for
// fixtures and for exporting batches.
inline void save_idx_images(const std::string& path, const Matrix& images, std::size_t rows,
                            std::size_t cols) {
  if (images.cols() != rows * cols) throw ShapeMismatch("save_idx_images: row length != h*w");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingFile("cannot open " + path + " for writing");
  detail::write_u32_be(out, kIdxImageMagic);
  detail::write_u32_be(out, static_cast<std::uint32_t>(images.rows()));
  detail::write_u32_be(out, static_cast<std::uint32_t>(rows));
  detail::write_u32_be(out, static_cast<std::uint32_t>(cols));
  for (double v : images.values()) {
    const int q = static_cast<int>(v * 255.0 + 0.5);
    out.put(static_cast<char>(q < 0 ? 0 : q > 255 ? 255 : q));
  }
}

inline void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingFile("cannot open " + path + " for writing");
  detail::write_u32_be(out, kIdxLabelMagic);
  detail::write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.put(static_cast<char>(l & 0xff));
}

}  // namespace volley

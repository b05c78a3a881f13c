#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "volley/packing.hpp"

namespace volley {

struct ConvSpec {
  std::size_t h = 0, w = 0;
  std::size_t kh = 0, kw = 0;
  std::size_t batch = 1;
  std::vector<Matrix> kernels;
  std::vector<double> biases;
  int stride = 1;

  std::size_t out_h() const { return h - kh + 1; }
  std::size_t out_w() const { return w - kw + 1; }

  void validate(std::size_t slot_count) const {
    if (stride != 1)
      throw Error("stride " + std::to_string(stride) +
                  " not supported: each non-unit stride forces a fresh representation "
                  "costing about h*w rotations per image; use stride 1");
    if (kh > h || kw > w)
      throw KernelTooLarge("conv: " + std::to_string(kh) + "x" + std::to_string(kw) +
                           " kernel exceeds " + std::to_string(h) + "x" + std::to_string(w) +
                           " image");
    if (batch * h * w > slot_count)
      throw OverflowError("conv: batch " + std::to_string(batch) + " of " + std::to_string(h) +
                          "x" + std::to_string(w) + " images needs " +
                          std::to_string(batch * h * w) + " slots, have " +
                          std::to_string(slot_count));
    if (kernels.empty() || kernels.size() != biases.size())
      throw ShapeMismatch("conv: kernel and bias counts differ");
    for (const auto& k : kernels)
      if (k.rows() != kh || k.cols() != kw) throw ShapeMismatch("conv: kernel shape mismatch");
  }
};

// Per-offset tiled copies of one kernel, covering every image block. Slot of
// pixel (x, y) in any image holds kernel[(x+a) mod kh][(y+b) mod kw].
inline std::vector<std::vector<double>> build_filter_constants(const ConvSpec& spec,
                                                               std::size_t kernel_index) {
  if (kernel_index >= spec.kernels.size())
    throw ShapeMismatch("build_filter_constants: no kernel " + std::to_string(kernel_index));
  const Matrix& k = spec.kernels[kernel_index];
  const std::size_t hw = spec.h * spec.w;
  std::vector<std::vector<double>> filters(spec.kh * spec.kw);
  for (std::size_t a = 0; a < spec.kh; ++a)
    for (std::size_t b = 0; b < spec.kw; ++b) {
      std::vector<double> f(spec.batch * hw, 0.0);
      for (std::size_t x = 0; x < spec.h; ++x)
        for (std::size_t y = 0; y < spec.w; ++y) {
          const double v = k((x + a) % spec.kh, (y + b) % spec.kw);
          for (std::size_t i = 0; i < spec.batch; ++i) f[i * hw + x * spec.w + y] = v;
        }
      filters[a * spec.kw + b] = std::move(f);
    }
  return filters;
}

namespace detail {

// Valid positions whose window sum under F^(a,b) aligns with the kernel:
// (r + a) and (c + b) must vanish mod kh / kw. The kh*kw selectors partition
// the valid region.
inline std::vector<double> offset_selector(const ConvSpec& spec, std::size_t a, std::size_t b,
                                           std::size_t stride) {
  std::vector<double> mask(spec.batch * stride, 0.0);
  for (std::size_t r = 0; r < spec.out_h(); ++r) {
    if ((r + a) % spec.kh != 0) continue;
    for (std::size_t c = 0; c < spec.out_w(); ++c) {
      if ((c + b) % spec.kw != 0) continue;
      for (std::size_t i = 0; i < spec.batch; ++i) mask[i * stride + r * spec.w + c] = 1.0;
    }
  }
  return mask;
}

}  // namespace detail

// Valid cross-correlation of every image with every kernel. Output k keeps the
// batch x (h*w) layout with the map parked on the out_h x out_w corner of each
// image block and exact zeros elsewhere.
inline std::vector<PackedMatrix> he_conv2d(SlotEngine& eng, const PackedMatrix& ct,
                                           const ConvSpec& spec) {
  spec.validate(ct.vec.slot_count());
  const std::size_t hw = spec.h * spec.w;
  PackedMatrix in = ct;
  if (ct.rows == spec.h && ct.cols == spec.w && spec.batch == 1) {
    in = PackedMatrix{ct.vec, 1, hw};
  } else if (ct.rows != spec.batch || ct.cols < hw) {
    throw ShapeMismatch("he_conv2d: packed shape does not hold batch " +
                        std::to_string(spec.batch) + " of " + std::to_string(spec.h) + "x" +
                        std::to_string(spec.w) + " images");
  }
  const std::size_t stride = in.cols;

  std::vector<double> bias_region =
      make_region_mask(spec.h, spec.w, spec.out_h(), spec.out_w(), spec.batch, stride);

  std::vector<PackedMatrix> maps;
  maps.reserve(spec.kernels.size());
  for (std::size_t k = 0; k < spec.kernels.size(); ++k) {
    auto filters = build_filter_constants(spec, k);
    SlotVector acc;
    for (std::size_t a = 0; a < spec.kh; ++a)
      for (std::size_t b = 0; b < spec.kw; ++b) {
        auto weighted = eng.cmul(in.vec, filters[a * spec.kw + b]);
        auto sums = sum_for_conv(eng, {weighted, in.rows, in.cols}, spec.h, spec.w, spec.kh,
                                 spec.kw);
        auto kept = eng.cmul(sums.vec, detail::offset_selector(spec, a, b, stride));
        acc = (a == 0 && b == 0) ? kept : eng.add(acc, kept);
      }
    if (spec.biases[k] != 0.0) {
      std::vector<double> bias(bias_region);
      for (double& x : bias) x *= spec.biases[k];
      acc = eng.cadd(acc, bias);
    }
    maps.push_back({std::move(acc), in.rows, in.cols});
  }
  return maps;
}

// Squeeze the garbage out of each feature map and stitch the maps side by
// side: batch x (out_h*out_w*kernel_count), row-major, no gaps. Row r of a map
// slides left by r*(w - out_w) — one charged rotation per row past the first,
// identical across images. Merging the compacted maps into one wide row is the
// multi-ciphertext recombination step and moves no ciphertext data here.
inline PackedMatrix reconstruct_representation(SlotEngine& eng,
                                               const std::vector<PackedMatrix>& maps,
                                               const ConvSpec& spec) {
  if (maps.empty()) throw ShapeMismatch("reconstruct_representation: no maps");
  const std::size_t hw = spec.h * spec.w;
  const std::size_t oh = spec.out_h(), ow = spec.out_w();
  const std::size_t map_len = oh * ow;
  const std::size_t out_cols = map_len * maps.size();
  for (const auto& m : maps)
    if (m.rows != spec.batch || m.cols < hw)
      throw ShapeMismatch("reconstruct_representation: map shape mismatch");

  const std::size_t s_out =
      std::max<std::size_t>(maps[0].vec.slot_count(), std::bit_ceil(spec.batch * out_cols));
  std::vector<double> flat(spec.batch * out_cols, 0.0);

  for (std::size_t k = 0; k < maps.size(); ++k) {
    const std::size_t stride = maps[k].cols;
    SlotVector packed;
    for (std::size_t r = 0; r < oh; ++r) {
      std::vector<double> dest(spec.batch * stride, 0.0);
      for (std::size_t i = 0; i < spec.batch; ++i)
        for (std::size_t c = 0; c < ow; ++c) dest[i * stride + r * ow + c] = 1.0;
      auto moved = eng.cmul(
          eng.rot(maps[k].vec, static_cast<std::int64_t>(r * (spec.w - ow))), dest);
      packed = (r == 0) ? moved : eng.add(packed, moved);
    }
    auto slots = eng.decode(packed);
    for (std::size_t i = 0; i < spec.batch; ++i)
      std::copy_n(slots.begin() + static_cast<std::ptrdiff_t>(i * stride), map_len,
                  flat.begin() + static_cast<std::ptrdiff_t>(i * out_cols + k * map_len));
  }
  return {eng.encode(flat, s_out), spec.batch, out_cols};
}

// Brute-force oracle: per kernel, batch x (out_h*out_w) with bias applied.
inline std::vector<Matrix> plain_conv2d(const Matrix& images, const ConvSpec& spec) {
  if (images.rows() != spec.batch || images.cols() != spec.h * spec.w)
    throw ShapeMismatch("plain_conv2d: images must be batch x (h*w)");
  const std::size_t oh = spec.out_h(), ow = spec.out_w();
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < spec.kernels.size(); ++k) {
    Matrix m(spec.batch, oh * ow);
    for (std::size_t i = 0; i < spec.batch; ++i)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double s = spec.biases[k];
          for (std::size_t p = 0; p < spec.kh; ++p)
            for (std::size_t q = 0; q < spec.kw; ++q)
              s += spec.kernels[k](p, q) * images(i, (r + p) * spec.w + (c + q));
          m(i, r * ow + c) = s;
        }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace volley

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volley/matrix.hpp"
#include "volley/simd.hpp"

namespace volley {

// A matrix laid out row-major inside one slot vector: slot [r*cols + c] holds
// entry (r, c); slots at and beyond rows*cols are zero after packing.
struct PackedMatrix {
  SlotVector vec;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

inline PackedMatrix pack_matrix(SlotEngine& eng, const Matrix& a, std::size_t slot_count = 0) {
  if (slot_count == 0) slot_count = eng.default_slots();
  if (a.rows() * a.cols() > slot_count)
    throw OverflowError("pack_matrix: " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " needs " +
                        std::to_string(a.rows() * a.cols()) + " slots, have " +
                        std::to_string(slot_count));
  return {eng.encode(a.values(), slot_count), a.rows(), a.cols()};
}

// Packs B (f x m) for use as a right operand: B^T cyclically extended to n rows,
// i.e. packed row r is column (r mod m) of B. Requires m | n.
inline PackedMatrix pack_transposed(SlotEngine& eng, const Matrix& b, std::size_t n,
                                    std::size_t slot_count = 0) {
  if (slot_count == 0) slot_count = eng.default_slots();
  const std::size_t f = b.rows(), m = b.cols();
  if (m == 0 || n % m != 0)
    throw ShapeMismatch("pack_transposed: " + std::to_string(m) + " columns do not divide " +
                        std::to_string(n) + " rows");
  if (n * f > slot_count)
    throw OverflowError("pack_transposed: " + std::to_string(n * f) + " slots needed, have " +
                        std::to_string(slot_count));
  std::vector<double> flat(n * f);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) flat[r * f + c] = b(c, r % m);
  return {eng.encode(flat, slot_count), n, f};
}

inline Matrix unpack(SlotEngine& eng, const PackedMatrix& pm) {
  Matrix out(pm.rows, pm.cols);
  auto slots = eng.decode(pm.vec);
  std::copy(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(pm.rows * pm.cols),
            out.values().begin());
  return out;
}

// Every slot takes its successor; the final slot wraps to the first. Rows bleed
// into each other, hence "incomplete". One rotation.
inline PackedMatrix incomplete_column_shift(SlotEngine& eng, const PackedMatrix& pm) {
  return {eng.rot(pm.vec, 1), pm.rows, pm.cols};
}

// Row i takes row i+1's contents; the last row wraps to row 0. When the matrix
// fills the vector exactly this is the single rotation by cols; otherwise the
// wrapped row has to be carried around the zero tail explicitly.
inline PackedMatrix row_shift(SlotEngine& eng, const PackedMatrix& pm) {
  const std::size_t n = pm.rows, f = pm.cols, s = pm.vec.slot_count();
  if (n <= 1) return pm;
  if (n * f == s) return {eng.rot(pm.vec, static_cast<std::int64_t>(f)), n, f};
  auto up = eng.rot(pm.vec, static_cast<std::int64_t>(f));
  std::vector<double> keep((n - 1) * f, 1.0);
  auto body = eng.cmul(up, keep);
  auto wrap = eng.rot(pm.vec, -static_cast<std::int64_t>((n - 1) * f));
  std::vector<double> last(n * f, 0.0);
  std::fill(last.begin() + static_cast<std::ptrdiff_t>((n - 1) * f), last.end(), 1.0);
  return {eng.add(body, eng.cmul(wrap, last)), n, f};
}

namespace detail {

// Accumulate v with its own rotations at stride*step for step = 1..count-1.
// When count is a power of two this doubles instead of laddering.
inline SlotVector stride_accumulate(SlotEngine& eng, const SlotVector& v, std::int64_t stride,
                                    std::size_t count) {
  SlotVector acc = v;
  if (is_power_of_two(count)) {
    for (std::size_t t = 1; t < count; t *= 2)
      acc = eng.add(acc, eng.rot(acc, stride * static_cast<std::int64_t>(t)));
    return acc;
  }
  for (std::size_t k = 1; k < count; ++k)
    acc = eng.add(acc, eng.rot(v, stride * static_cast<std::int64_t>(k)));
  return acc;
}

// Broadcast a vector whose only nonzero slots sit at multiples of stride
// (one "seed" per block) across count positions to the right of each seed.
inline SlotVector seed_broadcast(SlotEngine& eng, const SlotVector& seed, std::int64_t stride,
                                 std::size_t count) {
  SlotVector acc = seed;
  if (is_power_of_two(count)) {
    for (std::size_t t = 1; t < count; t *= 2)
      acc = eng.add(acc, eng.rot(acc, -stride * static_cast<std::int64_t>(t)));
    return acc;
  }
  for (std::size_t k = 1; k < count; ++k)
    acc = eng.add(acc, eng.rot(seed, -stride * static_cast<std::int64_t>(k)));
  return acc;
}

}  // namespace detail

// Replaces every row with the vector of column sums.
inline PackedMatrix sum_row_vec(SlotEngine& eng, const PackedMatrix& pm) {
  const std::size_t n = pm.rows, f = pm.cols, s = pm.vec.slot_count();
  if (n <= 1) return pm;
  const std::int64_t fstep = static_cast<std::int64_t>(f);
  if (n * f == s)  // full wraparound: one cyclic pass settles every row
    return {detail::stride_accumulate(eng, pm.vec, fstep, n), n, f};
  // With a zero tail after the matrix only row 0 accumulates the full sum;
  // mask it and fan it back out.
  auto acc = detail::stride_accumulate(eng, pm.vec, fstep, n);
  auto seed = eng.cmul(acc, std::vector<double>(f, 1.0));
  return {detail::seed_broadcast(eng, seed, fstep, n), n, f};
}

// Replaces every slot of row i with the sum of row i.
inline PackedMatrix sum_col_vec(SlotEngine& eng, const PackedMatrix& pm) {
  const std::size_t n = pm.rows, f = pm.cols;
  if (f <= 1) return pm;
  auto acc = detail::stride_accumulate(eng, pm.vec, 1, f);
  // Only the leading slot of each row survived unpolluted.
  std::vector<double> col0(n * f, 0.0);
  for (std::size_t r = 0; r < n; ++r) col0[r * f] = 1.0;
  auto seed = eng.cmul(acc, col0);
  return {detail::seed_broadcast(eng, seed, 1, f), n, f};
}

// 1.0 on the valid_rows x valid_cols corner of each image block, 0.0 elsewhere.
inline std::vector<double> make_region_mask(std::size_t rows, std::size_t cols,
                                            std::size_t valid_rows, std::size_t valid_cols,
                                            std::size_t batch, std::size_t image_stride) {
  if (valid_rows > rows || valid_cols > cols)
    throw ShapeMismatch("make_region_mask: valid region exceeds the image");
  if (batch == 0 || image_stride < rows * cols)
    throw ShapeMismatch("make_region_mask: image stride shorter than an image");
  std::vector<double> mask(batch * image_stride, 0.0);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t r = 0; r < valid_rows; ++r)
      for (std::size_t c = 0; c < valid_cols; ++c) mask[i * image_stride + r * cols + c] = 1.0;
  return mask;
}

// Window sums for every image in the vector at once: after two ladders of
// rotations, slot (r, c) of each image holds the kh x kw sum anchored there;
// the region mask then zeroes every slot whose window hangs off the edge.
// Exactly (kw-1) + (kh-1) rotations and one const_mult.
inline PackedMatrix sum_for_conv(SlotEngine& eng, const PackedMatrix& pm, std::size_t h,
                                 std::size_t w, std::size_t kh, std::size_t kw) {
  std::size_t batch, stride;
  if (pm.rows == h && pm.cols == w) {
    batch = 1;
    stride = h * w;
  } else if (pm.cols >= h * w) {
    batch = pm.rows;
    stride = pm.cols;
  } else {
    throw ShapeMismatch("sum_for_conv: packed shape holds no " + std::to_string(h) + "x" +
                        std::to_string(w) + " image");
  }
  if (kh > h || kw > w)
    throw KernelTooLarge("sum_for_conv: " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " kernel on " + std::to_string(h) + "x" + std::to_string(w) + " image");
  SlotVector acc = pm.vec;
  for (std::size_t q = 1; q < kw; ++q)
    acc = eng.add(acc, eng.rot(pm.vec, static_cast<std::int64_t>(q)));
  SlotVector rows_done = acc;
  for (std::size_t p = 1; p < kh; ++p)
    acc = eng.add(acc, eng.rot(rows_done, static_cast<std::int64_t>(p * w)));
  auto mask = make_region_mask(h, w, h - kh + 1, w - kw + 1, batch, stride);
  return {eng.cmul(acc, mask), pm.rows, pm.cols};
}

// Order-preserving block move onto a new row grid: the overlapping top-left
// block is copied, everything else becomes zero. Free of charged operations —
// this stands in for re-tiling data across ciphertexts, which the scheme does
// by re-encoding fresh ciphertexts rather than by rotations.
inline PackedMatrix regrid(SlotEngine& eng, const PackedMatrix& pm, std::size_t new_rows,
                           std::size_t new_cols, std::size_t new_slot_count) {
  if (new_rows * new_cols > new_slot_count)
    throw OverflowError("regrid: " + std::to_string(new_rows) + "x" + std::to_string(new_cols) +
                        " does not fit " + std::to_string(new_slot_count) + " slots");
  auto slots = eng.decode(pm.vec);
  std::vector<double> flat(new_rows * new_cols, 0.0);
  const std::size_t rows = std::min(pm.rows, new_rows);
  const std::size_t width = std::min(pm.cols, new_cols);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(slots.begin() + static_cast<std::ptrdiff_t>(r * pm.cols), width,
                flat.begin() + static_cast<std::ptrdiff_t>(r * new_cols));
  return {eng.encode(flat, new_slot_count), new_rows, new_cols};
}

}  // namespace volley

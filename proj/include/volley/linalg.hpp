#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "volley/packing.hpp"

namespace volley {

inline Matrix matmul_plain(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul_plain: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

struct MatmulOptions {
  // Treat B as plaintext: the packed weights are applied with const_mults and
  // their row shifts happen outside the ledger.
  bool weights_plain = false;
};

namespace detail {

// Smallest divisor of n that is >= m, or 0 if none.
inline std::size_t pad_to_divisor(std::size_t m, std::size_t n) {
  for (std::size_t d = m; d <= n; ++d)
    if (n % d == 0) return d;
  return 0;
}

}  // namespace detail

// C = A * B on packed data. A rides in as n x f; B is f x m with m | n after
// zero-column padding. Column k of the product is collected in pass k: shift
// the transposed weights down one row, multiply, fold each row to its sum,
// keep the one slot that belongs to output column (i + k) mod m', accumulate.
// Exactly m' cipher_mults (m' = padded m), zero in weights_plain mode.
inline PackedMatrix he_matmul(SlotEngine& eng, const PackedMatrix& a, const Matrix& b,
                              MatmulOptions opt = {}) {
  const std::size_t n = a.rows, f = a.cols, m = b.cols();
  const std::size_t s_in = a.vec.slot_count();
  if (f != b.rows())
    throw ShapeMismatch("he_matmul: A is " + std::to_string(n) + "x" + std::to_string(f) +
                        " but B has " + std::to_string(b.rows()) + " rows");
  if (m == 0 || n == 0) throw ShapeMismatch("he_matmul: empty operand");
  if (m > n)
    throw ShapeMismatch("he_matmul: output width " + std::to_string(m) +
                        " exceeds row count " + std::to_string(n) +
                        "; pad A with zero rows first");
  if (n * m > s_in)
    throw OverflowError("he_matmul: result " + std::to_string(n) + "x" + std::to_string(m) +
                        " does not fit " + std::to_string(s_in) + " slots");
  const std::size_t mp = detail::pad_to_divisor(m, n);

  // Work on a row grid wide enough for both the inputs and the selector
  // positions; widen the vector if the grid outgrows it (virtual ciphertext).
  const std::size_t grid = std::max(f, mp);
  const std::size_t s_work = std::max(s_in, std::bit_ceil(n * grid));
  PackedMatrix lhs = (grid == f && s_work == s_in)
                         ? a
                         : regrid(eng, a, n, grid, s_work);

  Matrix bp(f, mp);  // zero-padded columns
  for (std::size_t r = 0; r < f; ++r)
    for (std::size_t c = 0; c < m; ++c) bp(r, c) = b(r, c);

  PackedMatrix acc{eng.encode({}, s_work), n, grid};
  auto selector = [&](std::size_t k) {
    std::vector<double> mask(n * grid, 0.0);
    for (std::size_t i = 0; i < n; ++i) mask[i * grid + (i + k) % mp] = 1.0;
    return mask;
  };

  auto fold = [&](std::size_t k, const SlotVector& prod) {
    auto sums = sum_col_vec(eng, {prod, n, grid});
    auto kept = eng.cmul(sums.vec, selector(k));
    acc.vec = (k == 0) ? kept : eng.add(acc.vec, kept);
  };

  if (opt.weights_plain) {
    for (std::size_t k = 0; k < mp; ++k) {
      // Row r of the shifted transposed weights is column (r + k) mod m' of B.
      std::vector<double> tk(n * grid, 0.0);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) tk[r * grid + c] = bp(c, (r + k) % mp);
      fold(k, eng.cmul(lhs.vec, tk));
    }
  } else {
    PackedMatrix t = pack_transposed(eng, bp, n, s_work);
    if (grid != f) t = regrid(eng, t, n, grid, s_work);
    for (std::size_t k = 0; k < mp; ++k) {
      if (k > 0) t = row_shift(eng, t);
      fold(k, eng.mul(lhs.vec, t.vec));
    }
  }

  // Shed the selector grid and any zero padding; result is contiguous n x m.
  return regrid(eng, acc, n, m, s_in);
}

}  // namespace volley

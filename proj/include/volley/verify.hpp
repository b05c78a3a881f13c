#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "volley/conv.hpp"
#include "volley/linalg.hpp"
#include "volley/packing.hpp"
#include "volley/quadgrad.hpp"

namespace volley {

// Self-checking suites behind `verify`: each runs its module against the
// plaintext oracles with the module's own pinned thresholds and reports how
// many comparisons ran and how many missed.

struct VerifyReport {
  std::string suite;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst_err = 0.0;
};

namespace verify_detail {

struct Recorder {
  VerifyReport r;

  // Numeric comparison: err against a pinned tolerance.
  void record(double err, double tol) {
    ++r.cases;
    r.worst_err = std::max(r.worst_err, err);
    if (!(err <= tol)) ++r.failures;
  }

  // Structural check (operation counts, shapes): pass or fail, no error
  // magnitude to fold into worst_err.
  void record_ok(bool ok) {
    ++r.cases;
    if (!ok) ++r.failures;
  }

  // Deliberately broken comparison, used to prove the harness notices.
  void inject_fault() { record(1.0, 1e-12); }
};

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double span = 1.0) {
  std::uniform_real_distribution<double> u(-span, span);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

inline double worst_entry_err(const Matrix& got, const Matrix& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.values().size(); ++i)
    worst = std::max(worst, std::abs(got.values()[i] - want.values()[i]));
  return worst;
}

}  // namespace verify_detail

inline VerifyReport verify_packing(std::uint64_t seed, bool fault = false) {
  verify_detail::Recorder rec;
  rec.r.suite = "packing";
  std::mt19937_64 rng(seed);
  SlotEngine eng(1024);

  for (std::size_t n : {1, 2, 3, 4, 5, 8})
    for (std::size_t f : {1, 2, 3, 4, 8}) {
      Matrix a = verify_detail::random_matrix(rng, n, f);
      PackedMatrix pm = pack_matrix(eng, a, eng.default_slots());

      // Replicated row sums.
      auto rows_got = eng.decode(sum_row_vec(eng, pm).vec);
      double err = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) {
          double want = 0.0;
          for (std::size_t i = 0; i < n; ++i) want += a(i, c);
          err = std::max(err, std::abs(rows_got[r * f + c] - want));
        }
      rec.record(err, 1e-12);

      // Replicated column sums.
      auto cols_got = eng.decode(sum_col_vec(eng, pm).vec);
      err = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) {
          double want = 0.0;
          for (std::size_t j = 0; j < f; ++j) want += a(r, j);
          err = std::max(err, std::abs(cols_got[r * f + c] - want));
        }
      rec.record(err, 1e-12);

      // One cyclic slot shift. The rotation runs over the whole slot vector,
      // so the matrix's last slot picks up the zero tail, not the first entry.
      auto shifted = eng.decode(incomplete_column_shift(eng, pm).vec);
      err = 0.0;
      for (std::size_t i = 0; i + 1 < n * f; ++i)
        err = std::max(err, std::abs(shifted[i] - a.values()[i + 1]));
      err = std::max(err, std::abs(shifted[n * f - 1]));
      rec.record(err, 1e-12);

      // Full row rotation.
      auto rowed = eng.decode(row_shift(eng, pm).vec);
      err = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c)
          err = std::max(err, std::abs(rowed[r * f + c] - a((r + 1) % n, c)));
      rec.record(err, 1e-12);
    }

  // Window sums: exact rotation budget and exact garbage zeros.
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {5, 6}, {6, 5}})
    for (auto [kh, kw] : {std::pair<std::size_t, std::size_t>{2, 2}, {3, 3}, {2, 3}}) {
      Matrix img = verify_detail::random_matrix(rng, h, w);
      PackedMatrix pm = pack_matrix(eng, img, eng.default_slots());
      const OpCounts before = eng.counts();
      auto sums = eng.decode(sum_for_conv(eng, pm, h, w, kh, kw).vec);
      const OpCounts delta = eng.counts() - before;
      rec.record_ok(delta.rotations == (kh - 1) + (kw - 1));

      double err = 0.0;
      bool garbage_clean = true;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          if (r < h - kh + 1 && c < w - kw + 1) {
            double want = 0.0;
            for (std::size_t p = 0; p < kh; ++p)
              for (std::size_t q = 0; q < kw; ++q) want += img(r + p, c + q);
            err = std::max(err, std::abs(sums[r * w + c] - want));
          } else {
            garbage_clean = garbage_clean && sums[r * w + c] == 0.0;
          }
        }
      rec.record(err, 1e-12);
      rec.record_ok(garbage_clean);
    }

  if (fault) rec.inject_fault();
  return rec.r;
}

inline VerifyReport verify_matmul(std::uint64_t seed, bool fault = false) {
  verify_detail::Recorder rec;
  rec.r.suite = "matmul";
  std::mt19937_64 rng(seed);
  SlotEngine eng(1024);

  for (int t = 0; t < 40; ++t) {
    std::uniform_int_distribution<std::size_t> nn(1, 16), ff(1, 9);
    const std::size_t n = nn(rng), f = ff(rng);
    std::vector<std::size_t> divisors;
    for (std::size_t m = 1; m <= n; ++m)
      if (n % m == 0) divisors.push_back(m);
    const std::size_t m =
        divisors[std::uniform_int_distribution<std::size_t>(0, divisors.size() - 1)(rng)];

    Matrix a = verify_detail::random_matrix(rng, n, f);
    Matrix b = verify_detail::random_matrix(rng, f, m);
    PackedMatrix pa = pack_matrix(eng, a, eng.default_slots());

    const OpCounts before = eng.counts();
    Matrix got = unpack(eng, he_matmul(eng, pa, b));
    const OpCounts delta = eng.counts() - before;

    rec.record(verify_detail::worst_entry_err(got, matmul_plain(a, b)), 1e-9);
    rec.record_ok(delta.cipher_mults == m);
  }

  if (fault) rec.inject_fault();
  return rec.r;
}

inline VerifyReport verify_conv(std::uint64_t seed, bool fault = false) {
  verify_detail::Recorder rec;
  rec.r.suite = "conv";
  std::mt19937_64 rng(seed);
  SlotEngine eng(1024);

  for (int t = 0; t < 12; ++t) {
    std::uniform_int_distribution<std::size_t> hh(3, 8), kk(2, 3), bb(1, 3), cc(1, 3);
    ConvSpec spec;
    spec.h = hh(rng);
    spec.w = hh(rng);
    spec.kh = kk(rng);
    spec.kw = kk(rng);
    spec.batch = bb(rng);
    const std::size_t kernels = cc(rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t k = 0; k < kernels; ++k) {
      spec.kernels.push_back(verify_detail::random_matrix(rng, spec.kh, spec.kw));
      spec.biases.push_back(u(rng));
    }

    Matrix images = verify_detail::random_matrix(rng, spec.batch, spec.h * spec.w);
    PackedMatrix ct = pack_matrix(eng, images, eng.default_slots());
    auto maps = he_conv2d(eng, ct, spec);

    const OpCounts before = eng.counts();
    PackedMatrix rec_pm = reconstruct_representation(eng, maps, spec);
    const OpCounts delta = eng.counts() - before;
    rec.record_ok(delta.rotations <= kernels * (spec.out_h() + 1));

    auto plain = plain_conv2d(images, spec);
    const std::size_t map_len = spec.out_h() * spec.out_w();
    Matrix want(spec.batch, kernels * map_len);
    for (std::size_t k = 0; k < kernels; ++k)
      for (std::size_t i = 0; i < spec.batch; ++i)
        for (std::size_t j = 0; j < map_len; ++j) want(i, k * map_len + j) = plain[k](i, j);
    rec.record(verify_detail::worst_entry_err(unpack(eng, rec_pm), want), 1e-9);
  }

  if (fault) rec.inject_fault();
  return rec.r;
}

inline VerifyReport verify_quadgrad(std::uint64_t seed, bool fault = false) {
  verify_detail::Recorder rec;
  rec.r.suite = "quadgrad";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto random_instance = [&](std::size_t n, std::size_t d, std::size_t c) {
    LrDataset ds;
    ds.c = c;
    ds.X = Matrix(n, 1 + d);
    for (std::size_t i = 0; i < n; ++i) {
      ds.X(i, 0) = 1.0;
      for (std::size_t j = 1; j <= d; ++j) ds.X(i, j) = unit(rng);
    }
    std::uniform_int_distribution<int> lab(0, static_cast<int>(c) - 1);
    for (std::size_t i = 0; i < n; ++i) ds.y.push_back(lab(rng));
    return ds;
  };

  for (int t = 0; t < 10; ++t) {
    std::uniform_int_distribution<std::size_t> nn(2, 20), dd(1, 4), cc(2, 3);
    LrDataset ds = random_instance(nn(rng), dd(rng), cc(rng));
    Matrix w = verify_detail::random_matrix(rng, ds.c, ds.X.cols(), 2.0);
    Matrix p = softmax_probs(ds.X, w);

    double err = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) sum += p(i, j);
      err = std::max(err, std::abs(sum - 1.0));
    }
    rec.record(err, 1e-12);

    // Gradient against central differences of the log-likelihood.
    const Matrix yh = one_hot(ds.y, ds.c);
    const Matrix g = gradient(ds.X, yh, p);
    const double step = 1e-5;
    err = 0.0;
    for (std::size_t j = 0; j < w.rows(); ++j)
      for (std::size_t k = 0; k < w.cols(); ++k) {
        Matrix wp = w, wm = w;
        wp(j, k) += step;
        wm(j, k) -= step;
        const double fd =
            (log_likelihood(ds.X, yh, wp) - log_likelihood(ds.X, yh, wm)) / (2.0 * step);
        err = std::max(err, std::abs(fd - g(j, k)) / std::max(1.0, std::abs(g(j, k))));
      }
    rec.record(err, 1e-5);

    // Diagonal dominance of the bound over the curvature.
    auto dom = dominance_check(ds.X, w);
    rec.record(std::max(0.0, -1e-8 - dom.min_eigenvalue), 0.0);
    rec.record_ok(dom.pass);
  }

  // Fixed-Hessian ascent stays monotone.
  {
    LrDataset ds = random_instance(25, 3, 3);
    const Matrix yh = one_hot(ds.y, ds.c);
    const Matrix bbar_inv = build_bbar_inv(ds.X, ds.c);
    Matrix w(ds.c, ds.X.cols());
    double prev = log_likelihood(ds.X, yh, w);
    double drop = 0.0;
    for (int it = 0; it < 30; ++it) {
      Matrix gq = quadratic_gradient(gradient(ds.X, yh, softmax_probs(ds.X, w)), bbar_inv);
      for (std::size_t i = 0; i < w.values().size(); ++i) w.values()[i] += gq.values()[i];
      const double ll = log_likelihood(ds.X, yh, w);
      drop = std::max(drop, prev - ll);
      prev = ll;
    }
    rec.record(drop, 1e-9);
  }

  if (fault) rec.inject_fault();
  return rec.r;
}

inline VerifyReport run_suite(const std::string& name, std::uint64_t seed, bool fault = false) {
  if (name == "packing") return verify_packing(seed, fault);
  if (name == "matmul") return verify_matmul(seed, fault);
  if (name == "conv") return verify_conv(seed, fault);
  if (name == "quadgrad") return verify_quadgrad(seed, fault);
  if (name == "all") {
    VerifyReport all;
    all.suite = "all";
    // The fault, when requested, is planted once, not once per suite.
    for (const char* sub : {"packing", "matmul", "conv", "quadgrad"}) {
      VerifyReport r = run_suite(sub, seed, fault && std::string(sub) == "packing");
      all.cases += r.cases;
      all.failures += r.failures;
      all.worst_err = std::max(all.worst_err, r.worst_err);
    }
    return all;
  }
  throw Error("unknown verify suite: " + name);
}

}  // namespace volley

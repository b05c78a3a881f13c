#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "volley/conv.hpp"
#include "volley/linalg.hpp"
#include "volley/matrix.hpp"

namespace volley {

// Stock cubic activations (coefficient order c0 + c1*x + c2*x^2 + c3*x^3),
// fitted offline so the whole forward pass stays at multiplicative depth a
// leveled scheme can afford.
inline constexpr std::array<double, 4> kStockAct1{-0.00015120704, 0.4610149, 2.0225089,
                                                  -1.4511951};
inline constexpr std::array<double, 4> kStockAct2{-1.5650465, -0.9943767, 1.6794522, 0.5350255};

inline double eval_cubic(const std::array<double, 4>& c, double x) {
  return c[0] + x * (c[1] + x * (c[2] + x * c[3]));
}

// Evaluates c0 + c1*x + c2*x^2 + c3*x^3 slot-wise. Powers are built only when
// their coefficients are live, so the charge is at most two cipher_mults (one
// when c3 == 0, none for affine maps). The constant term is added through a
// masked cadd restricted to `region` (default: the full rows*cols grid), which
// keeps slots that held exact zeros at exact zero.
inline PackedMatrix poly_activate(SlotEngine& eng, const PackedMatrix& pm,
                                  const std::array<double, 4>& c,
                                  std::vector<double> region = {}) {
  SlotVector acc;
  bool have = false;
  if (c[1] != 0.0) {
    acc = eng.cmul(pm.vec, c[1]);
    have = true;
  }
  if (c[2] != 0.0 || c[3] != 0.0) {
    auto x2 = eng.mul(pm.vec, pm.vec);
    if (c[2] != 0.0) {
      auto t = eng.cmul(x2, c[2]);
      acc = have ? eng.add(acc, t) : std::move(t);
      have = true;
    }
    if (c[3] != 0.0) {
      auto t = eng.cmul(eng.mul(x2, pm.vec), c[3]);
      acc = have ? eng.add(acc, t) : std::move(t);
      have = true;
    }
  }
  if (!have) acc = eng.cmul(pm.vec, 0.0);
  if (c[0] != 0.0) {
    if (region.empty()) region.assign(pm.rows * pm.cols, 1.0);
    for (double& x : region) x *= c[0];
    acc = eng.cadd(acc, region);
  }
  return {std::move(acc), pm.rows, pm.cols};
}

// conv -> act1 -> flatten -> fc1 -> act2 -> fc2. The conv spec's batch field
// is overwritten per call; fc1 consumes the reconstructed maps in map-major
// order, fc2 rows are class scores.
struct CnnModel {
  ConvSpec conv;
  std::array<double, 4> act1 = kStockAct1;
  std::array<double, 4> act2 = kStockAct2;
  Matrix fc1;
  std::vector<double> b1;
  Matrix fc2;
  std::vector<double> b2;

  std::size_t classes() const { return fc2.rows(); }

  void validate() const {
    if (conv.kernels.empty() || conv.kernels.size() != conv.biases.size())
      throw ShapeMismatch("model: kernel and bias counts differ");
    for (const auto& k : conv.kernels)
      if (k.rows() != conv.kh || k.cols() != conv.kw)
        throw ShapeMismatch("model: kernel shape mismatch");
    const std::size_t width = conv.kernels.size() * conv.out_h() * conv.out_w();
    if (fc1.cols() != width)
      throw ShapeMismatch("model: fc1 is " + std::to_string(fc1.rows()) + "x" +
                          std::to_string(fc1.cols()) + " but the conv stage emits " +
                          std::to_string(width) + " features");
    if (b1.size() != fc1.rows()) throw ShapeMismatch("model: b1 length != fc1 rows");
    if (fc2.cols() != fc1.rows())
      throw ShapeMismatch("model: fc2 is " + std::to_string(fc2.rows()) + "x" +
                          std::to_string(fc2.cols()) + " but fc1 emits " +
                          std::to_string(fc1.rows()) + " features");
    if (b2.size() != fc2.rows()) throw ShapeMismatch("model: b2 length != fc2 rows");
  }
};

struct ForwardResult {
  Matrix logits;
  OpCounts ops;
};

namespace detail {

// One dense layer on a batch grid. The incoming n0 x f0 grid is regridded to
// power-of-two sides (wraparound layout, so row shifts are single rotations
// and column sums fold by doubling), multiplied, then cropped back to
// n0 x rows(w) with the bias added on exactly that region.
inline PackedMatrix fc_layer(SlotEngine& eng, const PackedMatrix& a, const Matrix& w,
                             const std::vector<double>& bias, bool weights_plain) {
  const std::size_t n0 = a.rows, f0 = a.cols, m = w.rows();
  if (w.cols() != f0)
    throw ShapeMismatch("fc layer: weights take " + std::to_string(w.cols()) +
                        " features, stage emits " + std::to_string(f0));
  const std::size_t np = std::bit_ceil(std::max(n0, m));
  const std::size_t fp = std::bit_ceil(std::max(f0, m));
  PackedMatrix wide = regrid(eng, a, np, fp, np * fp);

  Matrix wt(fp, m);
  for (std::size_t r = 0; r < f0; ++r)
    for (std::size_t c = 0; c < m; ++c) wt(r, c) = w(c, r);

  MatmulOptions opt;
  opt.weights_plain = weights_plain;
  PackedMatrix prod = he_matmul(eng, wide, wt, opt);

  PackedMatrix out = regrid(eng, prod, n0, m, std::bit_ceil(n0 * m));
  if (!bias.empty()) {
    std::vector<double> badd(n0 * m, 0.0);
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < m; ++j) badd[i * m + j] = bias[j];
    out.vec = eng.cadd(out.vec, badd);
  }
  return out;
}

}  // namespace detail

// Forward pass over one packed batch (one image per grid row). With
// ciphertext weights the multiplicative charge is kernels*2 (act1) + fc1 rows
// padded to a divisor + 2 (act2) + fc2 rows padded; weights_plain drops the
// fc passes to const_mults and leaves only the ten activation mults.
inline ForwardResult he_forward(SlotEngine& eng, const Matrix& images, const CnnModel& model,
                                bool weights_plain = false) {
  model.validate();
  ConvSpec spec = model.conv;
  spec.batch = images.rows();
  if (images.cols() != spec.h * spec.w)
    throw ShapeMismatch("he_forward: images are " + std::to_string(images.cols()) +
                        " wide, conv wants " + std::to_string(spec.h * spec.w));
  spec.validate(eng.default_slots());

  const OpCounts before = eng.counts();
  PackedMatrix ct = pack_matrix(eng, images);

  auto maps = he_conv2d(eng, ct, spec);
  const auto act_region = make_region_mask(spec.h, spec.w, spec.out_h(), spec.out_w(), spec.batch,
                                           maps[0].cols);
  for (auto& m : maps) m = poly_activate(eng, m, model.act1, act_region);

  PackedMatrix rec = reconstruct_representation(eng, maps, spec);

  PackedMatrix hidden = detail::fc_layer(eng, rec, model.fc1, model.b1, weights_plain);
  hidden = poly_activate(eng, hidden, model.act2);
  PackedMatrix scores = detail::fc_layer(eng, hidden, model.fc2, model.b2, weights_plain);

  return {unpack(eng, scores), eng.counts() - before};
}

// Same pipeline on bare doubles; the reference the packed path is checked
// against.
inline Matrix plaintext_forward(const Matrix& images, const CnnModel& model) {
  model.validate();
  ConvSpec spec = model.conv;
  spec.batch = images.rows();
  if (images.cols() != spec.h * spec.w)
    throw ShapeMismatch("plaintext_forward: images are " + std::to_string(images.cols()) +
                        " wide, conv wants " + std::to_string(spec.h * spec.w));

  const std::size_t map_len = spec.out_h() * spec.out_w();
  auto maps = plain_conv2d(images, spec);
  Matrix flat(spec.batch, maps.size() * map_len);
  for (std::size_t k = 0; k < maps.size(); ++k)
    for (std::size_t i = 0; i < spec.batch; ++i)
      for (std::size_t j = 0; j < map_len; ++j)
        flat(i, k * map_len + j) = eval_cubic(model.act1, maps[k](i, j));

  Matrix hidden(spec.batch, model.fc1.rows());
  for (std::size_t i = 0; i < spec.batch; ++i)
    for (std::size_t u = 0; u < model.fc1.rows(); ++u) {
      double s = model.b1[u];
      for (std::size_t j = 0; j < model.fc1.cols(); ++j) s += model.fc1(u, j) * flat(i, j);
      hidden(i, u) = eval_cubic(model.act2, s);
    }

  Matrix logits(spec.batch, model.fc2.rows());
  for (std::size_t i = 0; i < spec.batch; ++i)
    for (std::size_t v = 0; v < model.fc2.rows(); ++v) {
      double s = model.b2[v];
      for (std::size_t u = 0; u < model.fc2.cols(); ++u) s += model.fc2(v, u) * hidden(i, u);
      logits(i, v) = s;
    }
  return logits;
}

// Ties resolve to the lowest index.
inline std::size_t argmax_row(const Matrix& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j)
    if (m(row, j) > m(row, best)) best = j;
  return best;
}

// --- model directory -------------------------------------------------------
//
//   conv_k<i>.csv   one kh x kw kernel each
//   fc1.csv         hidden x features
//   fc2.csv         classes x hidden
//   biases.csv      single column: conv biases, then b1, then b2
//   manifest.json   conv geometry plus act1/act2 coefficients

inline void save_model(const std::string& dir, const CnnModel& model) {
  model.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);

  for (std::size_t k = 0; k < model.conv.kernels.size(); ++k)
    model.conv.kernels[k].write_csv((base / ("conv_k" + std::to_string(k) + ".csv")).string());
  model.fc1.write_csv((base / "fc1.csv").string());
  model.fc2.write_csv((base / "fc2.csv").string());

  Matrix biases(model.conv.biases.size() + model.b1.size() + model.b2.size(), 1);
  std::size_t at = 0;
  for (double v : model.conv.biases) biases(at++, 0) = v;
  for (double v : model.b1) biases(at++, 0) = v;
  for (double v : model.b2) biases(at++, 0) = v;
  biases.write_csv((base / "biases.csv").string());

  nlohmann::ordered_json manifest;
  manifest["h"] = model.conv.h;
  manifest["w"] = model.conv.w;
  manifest["kh"] = model.conv.kh;
  manifest["kw"] = model.conv.kw;
  manifest["kernels"] = model.conv.kernels.size();
  manifest["act1"] = model.act1;
  manifest["act2"] = model.act2;
  std::ofstream out(base / "manifest.json");
  if (!out) throw MissingFile("cannot write " + (base / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

inline CnnModel load_model(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  std::ifstream in(base / "manifest.json");
  if (!in) throw MissingFile("cannot open " + (base / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((base / "manifest.json").string() + ": " + e.what());
  }

  CnnModel model;
  std::size_t kernel_count = 0;
  try {
    model.conv.h = manifest.at("h").get<std::size_t>();
    model.conv.w = manifest.at("w").get<std::size_t>();
    model.conv.kh = manifest.at("kh").get<std::size_t>();
    model.conv.kw = manifest.at("kw").get<std::size_t>();
    kernel_count = manifest.at("kernels").get<std::size_t>();
    model.act1 = manifest.at("act1").get<std::array<double, 4>>();
    model.act2 = manifest.at("act2").get<std::array<double, 4>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((base / "manifest.json").string() + ": " + e.what());
  }

  for (std::size_t k = 0; k < kernel_count; ++k)
    model.conv.kernels.push_back(
        Matrix::read_csv((base / ("conv_k" + std::to_string(k) + ".csv")).string()));
  model.fc1 = Matrix::read_csv((base / "fc1.csv").string());
  model.fc2 = Matrix::read_csv((base / "fc2.csv").string());

  const Matrix biases = Matrix::read_csv((base / "biases.csv").string());
  const std::size_t want = kernel_count + model.fc1.rows() + model.fc2.rows();
  if (biases.cols() != 1 || biases.rows() != want)
    throw ShapeMismatch("biases.csv: want " + std::to_string(want) + "x1, got " +
                        std::to_string(biases.rows()) + "x" + std::to_string(biases.cols()));
  std::size_t at = 0;
  for (std::size_t k = 0; k < kernel_count; ++k) model.conv.biases.push_back(biases(at++, 0));
  model.b1.resize(model.fc1.rows());
  for (auto& v : model.b1) v = biases(at++, 0);
  model.b2.resize(model.fc2.rows());
  for (auto& v : model.b2) v = biases(at++, 0);

  model.validate();
  return model;
}

// Seeded model with weight scales that keep every cubic input in the tame
// part of its range. Draw order: kernels, conv biases, fc1, b1, fc2, b2.
inline CnnModel make_random_model(std::uint64_t seed, std::size_t h = 28, std::size_t w = 28,
                                  std::size_t kh = 3, std::size_t kw = 3, std::size_t kernels = 4,
                                  std::size_t hidden = 64, std::size_t classes = 10) {
  std::mt19937_64 rng(seed);
  auto draw = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  CnnModel model;
  model.conv.h = h;
  model.conv.w = w;
  model.conv.kh = kh;
  model.conv.kw = kw;
  for (std::size_t k = 0; k < kernels; ++k) {
    Matrix ker(kh, kw);
    for (auto& v : ker.values()) v = draw(-0.1, 0.1);
    model.conv.kernels.push_back(std::move(ker));
  }
  for (std::size_t k = 0; k < kernels; ++k) model.conv.biases.push_back(draw(-0.1, 0.1));

  const std::size_t width = kernels * model.conv.out_h() * model.conv.out_w();
  model.fc1 = Matrix(hidden, width);
  for (auto& v : model.fc1.values()) v = draw(-0.001, 0.001);
  model.b1.resize(hidden);
  for (auto& v : model.b1) v = draw(-0.01, 0.01);
  model.fc2 = Matrix(classes, hidden);
  for (auto& v : model.fc2.values()) v = draw(-0.1, 0.1);
  model.b2.resize(classes);
  for (auto& v : model.b2) v = draw(-0.1, 0.1);
  return model;
}

}  // namespace volley

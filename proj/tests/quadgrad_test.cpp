#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/Dense>

#include "volley/libsvm.hpp"
#include "volley/quadgrad.hpp"

using namespace volley;

namespace {

std::string data_file(const char* name) {
  return std::string(VOLLEY_DATA_DIR) + "/" + name;
}

struct Instance {
  Matrix x;
  std::vector<int> y;
  std::size_t c;
};

// Random normalized design matrix (bias column of ones), random labels.
Instance random_instance(std::mt19937_64& rng, std::size_t n, std::size_t d, std::size_t c) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Instance ins;
  ins.c = c;
  ins.x = Matrix(n, 1 + d);
  for (std::size_t i = 0; i < n; ++i) {
    ins.x(i, 0) = 1.0;
    for (std::size_t j = 1; j <= d; ++j) ins.x(i, j) = unit(rng);
  }
  std::uniform_int_distribution<int> lab(0, static_cast<int>(c) - 1);
  for (std::size_t i = 0; i < n; ++i) ins.y.push_back(lab(rng));
  return ins;
}

Matrix random_weights(std::mt19937_64& rng, std::size_t c, std::size_t m, double span) {
  std::uniform_real_distribution<double> u(-span, span);
  Matrix w(c, m);
  for (auto& v : w.values()) v = u(rng);
  return w;
}

Matrix fd_gradient(const Matrix& x, const Matrix& yh, Matrix w, double h) {
  Matrix fd(w.rows(), w.cols());
  for (std::size_t j = 0; j < w.rows(); ++j)
    for (std::size_t k = 0; k < w.cols(); ++k) {
      const double keep = w(j, k);
      w(j, k) = keep + h;
      const double up = log_likelihood(x, yh, w);
      w(j, k) = keep - h;
      const double down = log_likelihood(x, yh, w);
      w(j, k) = keep;
      fd(j, k) = (up - down) / (2.0 * h);
    }
  return fd;
}

// Scaled error with an absolute floor of 1: forgiving for near-zero entries,
// relative for large ones.
double scaled_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

TEST_CASE("one_hot basics") {
  Matrix m = one_hot({0, 2}, 3);
  REQUIRE(m == Matrix::from_rows({{1, 0, 0}, {0, 0, 1}}));

  Matrix ones = one_hot({0, 0, 0}, 1);
  for (double v : ones.values()) REQUIRE(v == 1.0);

  REQUIRE_THROWS_AS(one_hot({0, 3}, 3), LabelOutOfRange);
  REQUIRE_THROWS_AS(one_hot({-1}, 2), LabelOutOfRange);
}

TEST_CASE("softmax at zero weights is uniform and rows always sum to one") {
  std::mt19937_64 rng(41);
  auto ins = random_instance(rng, 6, 3, 4);
  Matrix p0 = softmax_probs(ins.x, Matrix(4, 4));
  for (double v : p0.values()) REQUIRE(v == 0.25);

  for (int t = 0; t < 25; ++t) {
    auto inst = random_instance(rng, 5, 3, 3);
    Matrix w = random_weights(rng, 3, 4, 3.0);
    Matrix p = softmax_probs(inst.x, w);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) {
        sum += p(i, j);
        REQUIRE(p(i, j) > 0.0);
        REQUIRE(p(i, j) < 1.0);
      }
      REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("softmax saturates on a dominant logit") {
  // One class leads the others by 50 in logit space.
  Matrix x = Matrix::from_rows({{1.0, 1.0}});
  Matrix w = Matrix::from_rows({{0.0, 50.0}, {0.0, 0.0}, {0.0, -3.0}});
  Matrix p = softmax_probs(x, w);
  REQUIRE(p(0, 0) >= 1.0 - 1e-20);
}

TEST_CASE("softmax matches a long-double oracle") {
  std::mt19937_64 rng(43);
  auto ins = random_instance(rng, 5, 2, 3);
  Matrix w = random_weights(rng, 3, 3, 2.0);
  Matrix p = softmax_probs(ins.x, w);
  for (std::size_t i = 0; i < 5; ++i) {
    long double z[3], sum = 0.0L;
    for (std::size_t j = 0; j < 3; ++j) {
      z[j] = 0.0L;
      for (std::size_t k = 0; k < 3; ++k)
        z[j] += static_cast<long double>(ins.x(i, k)) * static_cast<long double>(w(j, k));
      z[j] = expl(z[j]);
      sum += z[j];
    }
    for (std::size_t j = 0; j < 3; ++j)
      REQUIRE_THAT(p(i, j), Catch::Matchers::WithinAbs(static_cast<double>(z[j] / sum), 1e-12));
  }
}

TEST_CASE("log_likelihood fixed points and identities") {
  // W = 0, n = 4, c = 2.
  std::mt19937_64 rng(44);
  auto ins = random_instance(rng, 4, 3, 2);
  Matrix yh = one_hot(ins.y, 2);
  REQUIRE_THAT(log_likelihood(ins.x, yh, Matrix(2, 4)),
               Catch::Matchers::WithinAbs(4.0 * std::log(0.5), 1e-9));

  // Perfectly separated pair: the likelihood approaches 0 from below. (The
  // logit gap of 30 keeps 1 + e^-30 representable; a much larger gap would
  // round the likelihood to exactly zero.)
  Matrix x = Matrix::from_rows({{1.0, 0.0}, {1.0, 1.0}});
  Matrix sep_yh = one_hot({0, 1}, 2);
  Matrix w = Matrix::from_rows({{15.0, -30.0}, {-15.0, 30.0}});
  const double ll = log_likelihood(x, sep_yh, w);
  REQUIRE(ll < 0.0);
  REQUIRE(ll > -1e-12);

  // Equals sum_i log P[i][y_i].
  auto inst = random_instance(rng, 7, 4, 3);
  Matrix wr = random_weights(rng, 3, 5, 2.0);
  Matrix p = softmax_probs(inst.x, wr);
  double want = 0.0;
  for (std::size_t i = 0; i < 7; ++i) want += std::log(p(i, static_cast<std::size_t>(inst.y[i])));
  REQUIRE_THAT(log_likelihood(inst.x, one_hot(inst.y, 3), wr),
               Catch::Matchers::WithinAbs(want, 1e-12));

  REQUIRE_THROWS_AS(log_likelihood(inst.x, one_hot(inst.y, 3), Matrix(3, 4)), ShapeMismatch);
}

TEST_CASE("gradient fixed points and finite differences") {
  std::mt19937_64 rng(45);
  auto ins = random_instance(rng, 6, 3, 3);
  Matrix yh = one_hot(ins.y, 3);

  // P == Yh: stationary at a perfect fit.
  Matrix g0 = gradient(ins.x, yh, yh);
  for (double v : g0.values()) REQUIRE(v == 0.0);

  // Binary problem at W = 0: the two gradient rows are exact negatives.
  auto bin = random_instance(rng, 8, 3, 2);
  Matrix gb = gradient(bin.x, one_hot(bin.y, 2), softmax_probs(bin.x, Matrix(2, 4)));
  for (std::size_t k = 0; k < 4; ++k) REQUIRE(gb(0, k) == -gb(1, k));

  // Central finite differences of the log-likelihood, step 1e-5.
  auto fd_ins = random_instance(rng, 8, 4, 3);
  Matrix fd_yh = one_hot(fd_ins.y, 3);
  Matrix w = random_weights(rng, 3, 5, 1.5);
  Matrix g = gradient(fd_ins.x, fd_yh, softmax_probs(fd_ins.x, w));
  Matrix fd = fd_gradient(fd_ins.x, fd_yh, w, 1e-5);
  for (std::size_t i = 0; i < g.values().size(); ++i)
    REQUIRE(scaled_err(fd.values()[i], g.values()[i]) <= 1e-5);

  REQUIRE_THROWS_AS(gradient(ins.x, yh, Matrix(5, 3)), ShapeMismatch);
}

TEST_CASE("build_bbar_inv constructions") {
  const double eps = 1e-8;

  // X = I2: H-bar = -I/2, so every bound entry is eps + 1/2.
  Matrix eye = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  Matrix b = build_bbar_inv(eye, 3, eps);
  REQUIRE(b.rows() == 3);
  for (double v : b.values()) REQUIRE(v == 1.0 / (0.5 + eps));

  // All rows are copies of row 0.
  std::mt19937_64 rng(46);
  auto ins = random_instance(rng, 9, 4, 3);
  Matrix br = build_bbar_inv(ins.x, 3, eps);
  for (std::size_t i = 1; i < br.rows(); ++i)
    for (std::size_t j = 0; j < br.cols(); ++j) REQUIRE(br(i, j) == br(0, j));

  // Zero features: only the bias column contributes, n/2 in slot 0.
  const std::size_t n = 6;
  Matrix xz(n, 3);
  for (std::size_t i = 0; i < n; ++i) xz(i, 0) = 1.0;
  Matrix bz = build_bbar_inv(xz, 2, eps);
  REQUIRE(bz(0, 0) == 1.0 / (eps + n / 2.0));
  REQUIRE(bz(0, 1) == 1.0 / eps);
  REQUIRE(bz(0, 2) == 1.0 / eps);
}

TEST_CASE("quadratic_gradient is the element-wise product") {
  std::mt19937_64 rng(47);
  Matrix g = random_weights(rng, 3, 4, 5.0);
  Matrix ones(3, 4, 1.0);
  REQUIRE(quadratic_gradient(g, ones) == g);
  REQUIRE(quadratic_gradient(Matrix(3, 4), ones) == Matrix(3, 4));

  Matrix b = random_weights(rng, 3, 4, 2.0);
  Matrix q = quadratic_gradient(g, b);
  for (std::size_t i = 0; i < q.values().size(); ++i)
    REQUIRE(q.values()[i] == g.values()[i] * b.values()[i]);

  REQUIRE_THROWS_AS(quadratic_gradient(g, Matrix(4, 3)), ShapeMismatch);
}

TEST_CASE("momentum coefficient sequence starts as printed") {
  const double alpha0 = 0.01;
  const double alpha1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * alpha0 * alpha0));
  REQUIRE_THAT(alpha1, Catch::Matchers::WithinAbs(1.000099990, 1e-9));
}

TEST_CASE("one NAG step expands by hand") {
  std::mt19937_64 rng(48);
  auto ins = random_instance(rng, 5, 3, 3);
  LrDataset ds{ins.x, ins.y, 3};

  auto res = train_nag(ds, 1);

  Matrix yh = one_hot(ds.y, 3);
  Matrix g0 = gradient(ds.X, yh, softmax_probs(ds.X, Matrix(3, 4)));
  Matrix gq = quadratic_gradient(g0, build_bbar_inv(ds.X, 3, 1e-8));
  const double alpha1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * 0.01 * 0.01));
  const double eta = (1.0 - 0.01) / alpha1;
  const double gamma = 1.0 / (5.0 * 1.0);
  for (std::size_t i = 0; i < gq.values().size(); ++i) {
    const double want = (1.0 - eta) * ((1.0 + gamma) * gq.values()[i]);
    REQUIRE(res.W.values()[i] == want);
  }
  REQUIRE(res.trace.size() == 1);
  REQUIRE(res.trace[0].iter == 1);
  REQUIRE(res.trace[0].grad_maxnorm == max_abs(g0));
  REQUIRE(res.trace[0].loglik == log_likelihood(ds.X, yh, res.W));
}

TEST_CASE("one Adagrad step expands by hand, and a stationary start stays put") {
  std::mt19937_64 rng(49);
  auto ins = random_instance(rng, 6, 2, 2);
  LrDataset ds{ins.x, ins.y, 2};

  auto res = train_adagrad(ds, 1);
  Matrix yh = one_hot(ds.y, 2);
  Matrix g0 = gradient(ds.X, yh, softmax_probs(ds.X, Matrix(2, 3)));
  Matrix gq = quadratic_gradient(g0, build_bbar_inv(ds.X, 2, 1e-8));
  for (std::size_t i = 0; i < gq.values().size(); ++i) {
    const double gt = gq.values()[i] * gq.values()[i];
    const double want = (1.0 + 0.01) / std::sqrt(1e-8 + gt) * gq.values()[i];
    REQUIRE(res.W.values()[i] == want);
  }

  // Two identical samples with opposite labels: gradient is zero at W = 0
  // and the optimizer has nowhere to go.
  LrDataset flat;
  flat.X = Matrix::from_rows({{1.0, 0.5}, {1.0, 0.5}});
  flat.y = {0, 1};
  flat.c = 2;
  auto still = train_adagrad(flat, 5);
  for (double v : still.W.values()) REQUIRE(v == 0.0);
  for (const auto& row : still.trace) REQUIRE(row.grad_maxnorm == 0.0);
}

TEST_CASE("both trainers improve iris and are deterministic") {
  LrDataset iris = load_libsvm(data_file("iris.scale"), 3);
  REQUIRE(iris.n() == 150);
  REQUIRE(iris.d() == 4);

  const double base = log_likelihood(iris.X, one_hot(iris.y, 3), Matrix(3, 5));
  REQUIRE_THAT(base, Catch::Matchers::WithinAbs(150.0 * std::log(1.0 / 3.0), 1e-9));

  auto nag = train_nag(iris, 50);
  REQUIRE(nag.trace.back().loglik > base);

  auto ada = train_adagrad(iris, 100);
  REQUIRE(ada.trace.back().loglik > base);
  REQUIRE(ada.trace.back().grad_maxnorm < ada.trace.front().grad_maxnorm);

  auto nag2 = train_nag(iris, 50);
  auto ada2 = train_adagrad(iris, 100);
  REQUIRE(nag2.W == nag.W);
  REQUIRE(ada2.W == ada.W);
  for (std::size_t i = 0; i < nag.trace.size(); ++i) {
    REQUIRE(nag2.trace[i].loglik == nag.trace[i].loglik);
    REQUIRE(nag2.trace[i].grad_maxnorm == nag.trace[i].grad_maxnorm);
  }

  REQUIRE_THROWS_AS(train_nag(iris, 0), Error);
  REQUIRE_THROWS_AS(train_adagrad(iris, 0), Error);
}

TEST_CASE("exact_hessian block structure") {
  // Single sample, two classes, uniform probabilities, x = (1).
  Matrix x(1, 1, 1.0);
  Matrix p = softmax_probs(x, Matrix(2, 1));
  Matrix h = exact_hessian(x, p);
  REQUIRE(h == Matrix::from_rows({{-0.25, 0.25}, {0.25, -0.25}}));

  // Structural symmetry, exactly.
  std::mt19937_64 rng(50);
  auto ins = random_instance(rng, 6, 3, 3);
  Matrix w = random_weights(rng, 3, 4, 2.0);
  Matrix hr = exact_hessian(ins.x, softmax_probs(ins.x, w));
  for (std::size_t i = 0; i < hr.rows(); ++i)
    for (std::size_t j = 0; j < hr.cols(); ++j) REQUIRE(hr(i, j) == hr(j, i));

  REQUIRE_THROWS_AS(exact_hessian(ins.x, Matrix(5, 3)), ShapeMismatch);
}

TEST_CASE("exact_hessian matches finite differences of the gradient") {
  std::mt19937_64 rng(51);
  auto ins = random_instance(rng, 4, 3, 2);
  Matrix yh = one_hot(ins.y, 2);
  Matrix w = random_weights(rng, 2, 4, 1.0);
  Matrix h = exact_hessian(ins.x, softmax_probs(ins.x, w));
  const std::size_t m = ins.x.cols();

  const double step = 1e-5;
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t b = 0; b < m; ++b) {
      Matrix wp = w, wm = w;
      wp(k, b) += step;
      wm(k, b) -= step;
      Matrix gp = gradient(ins.x, yh, softmax_probs(ins.x, wp));
      Matrix gm = gradient(ins.x, yh, softmax_probs(ins.x, wm));
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t a = 0; a < m; ++a) {
          const double fd = (gp(j, a) - gm(j, a)) / (2.0 * step);
          REQUIRE(scaled_err(fd, h(j * m + a, k * m + b)) <= 1e-4);
        }
    }
}

TEST_CASE("the diagonal bound dominates the curvature") {
  // Single sample, two classes: the per-block hand bound p(1-p) <= 1/4 <= 1/2.
  Matrix x1 = Matrix::from_rows({{1.0, 0.3}});
  auto single = dominance_check(x1, Matrix(2, 2));
  REQUIRE(single.pass);

  std::mt19937_64 rng(52);
  for (int t = 0; t < 10; ++t) {
    std::uniform_int_distribution<std::size_t> nn(1, 20), dd(1, 4), cc(2, 3);
    auto ins = random_instance(rng, nn(rng), dd(rng), cc(rng));
    auto at_zero = dominance_check(ins.x, Matrix(ins.c, ins.x.cols()));
    REQUIRE(at_zero.pass);
    auto at_random = dominance_check(ins.x, random_weights(rng, ins.c, ins.x.cols(), 5.0));
    REQUIRE(at_random.pass);
    REQUIRE(at_random.min_eigenvalue >= -1e-8);
  }

  REQUIRE_THROWS_AS(dominance_check(x1, Matrix(2, 3)), ShapeMismatch);
}

TEST_CASE("fixed-Hessian ascent never loses likelihood on iris") {
  LrDataset iris = load_libsvm(data_file("iris.scale"), 3);
  Matrix yh = one_hot(iris.y, 3);
  Matrix bbar_inv = build_bbar_inv(iris.X, 3, 1e-8);
  Matrix w(3, iris.X.cols());
  double prev = log_likelihood(iris.X, yh, w);
  for (int it = 0; it < 50; ++it) {
    Matrix g = gradient(iris.X, yh, softmax_probs(iris.X, w));
    Matrix gq = quadratic_gradient(g, bbar_inv);
    for (std::size_t i = 0; i < w.values().size(); ++i) w.values()[i] += gq.values()[i];
    const double ll = log_likelihood(iris.X, yh, w);
    REQUIRE(ll >= prev - 1e-9);
    prev = ll;
  }
}

TEST_CASE("libsvm parsing and normalization") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "volley_libsvm";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // Feature ranges already span [0,1], so normalization is the identity and
  // the sparse fill is directly visible.
  std::ofstream(dir / "tiny.svm") << "2 1:0.5 3:1\n"
                                  << "1 1:0 3:0\n"
                                  << "1 1:1 2:1\n";
  LrDataset tiny = load_libsvm((dir / "tiny.svm").string(), 2);
  REQUIRE(tiny.n() == 3);
  REQUIRE(tiny.d() == 3);
  REQUIRE(tiny.X(0, 0) == 1.0);
  REQUIRE(tiny.X(0, 1) == 0.5);
  REQUIRE(tiny.X(0, 2) == 0.0);
  REQUIRE(tiny.X(0, 3) == 1.0);
  REQUIRE(tiny.y == std::vector<int>{1, 0, 0});  // raw labels {1,2} -> {0,1}

  // Min-max rescaling into [0,1], constant columns collapse to zero.
  std::ofstream(dir / "scale.svm") << "1 1:4 2:7\n"
                                   << "2 1:8 2:7\n"
                                   << "1 1:6 2:7\n";
  LrDataset scaled = load_libsvm((dir / "scale.svm").string(), 2);
  REQUIRE(scaled.X(0, 1) == 0.0);
  REQUIRE(scaled.X(1, 1) == 1.0);
  REQUIRE(scaled.X(2, 1) == 0.5);
  for (std::size_t i = 0; i < 3; ++i) REQUIRE(scaled.X(i, 2) == 0.0);

  std::ofstream(dir / "badlabel.svm") << "x 1:1\n";
  REQUIRE_THROWS_AS(load_libsvm((dir / "badlabel.svm").string(), 2), ParseError);
  std::ofstream(dir / "badidx.svm") << "1 0:1\n";
  REQUIRE_THROWS_AS(load_libsvm((dir / "badidx.svm").string(), 2), ParseError);
  std::ofstream(dir / "badval.svm") << "1 1:x\n";
  REQUIRE_THROWS_AS(load_libsvm((dir / "badval.svm").string(), 2), ParseError);
  std::ofstream(dir / "manylabels.svm") << "1 1:1\n2 1:2\n3 1:3\n4 1:4\n";
  REQUIRE_THROWS_AS(load_libsvm((dir / "manylabels.svm").string(), 3), LabelOutOfRange);
  REQUIRE_THROWS_AS(load_libsvm((dir / "absent.svm").string(), 2), MissingFile);
  std::ofstream(dir / "empty.svm") << "";
  REQUIRE_THROWS_AS(load_libsvm((dir / "empty.svm").string(), 2), ParseError);
}

TEST_CASE("reference datasets load with the expected shapes") {
  LrDataset iris = load_libsvm(data_file("iris.scale"), 3);
  REQUIRE(iris.n() == 150);
  REQUIRE(iris.d() == 4);
  REQUIRE(iris.c == 3);

  LrDataset wine = load_libsvm(data_file("wine.scale"), 3);
  REQUIRE(wine.n() == 178);
  REQUIRE(wine.d() == 13);
  REQUIRE(wine.c == 3);

  for (const auto& ds : {iris, wine}) {
    for (std::size_t i = 0; i < ds.n(); ++i) {
      REQUIRE(ds.X(i, 0) == 1.0);
      for (std::size_t j = 1; j < ds.X.cols(); ++j) {
        REQUIRE(ds.X(i, j) >= 0.0);
        REQUIRE(ds.X(i, j) <= 1.0);
      }
    }
  }
}

TEST_CASE("kronecker product inverse factorizes") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto rand_mat = [&](Eigen::Index n) {
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) m(i, j) = u(rng);
    m += 3.0 * Eigen::MatrixXd::Identity(n, n);  // comfortably invertible
    return m;
  };
  for (auto [na, nb] : {std::pair<Eigen::Index, Eigen::Index>{2, 3}, {3, 2}, {2, 2}, {3, 3}}) {
    Eigen::MatrixXd a = rand_mat(na), b = rand_mat(nb);
    Eigen::MatrixXd lhs = kron(a, b).inverse();
    Eigen::MatrixXd rhs = kron(a.inverse(), b.inverse());
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

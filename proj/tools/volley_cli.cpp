// volley: command-line front end for the slot-vector toolkit.
//
// Subcommands: matmul, conv, infer, train, verify. Every run prints one JSON
// report (stdout, or --output <path>) and exits 0 on success, 1 on I/O, shape,
// or argument errors, 2 when a numerical verification misses its tolerance.
// Reports are byte-deterministic for fixed inputs and flags; the one advisory
// exception is infer's wall_time_ms field, which is a measurement.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "volley/conv.hpp"
#include "volley/idx.hpp"
#include "volley/libsvm.hpp"
#include "volley/linalg.hpp"
#include "volley/matrix.hpp"
#include "volley/network.hpp"
#include "volley/packing.hpp"
#include "volley/quadgrad.hpp"
#include "volley/simd.hpp"
#include "volley/verify.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct RunConfig {
  std::size_t slots = 0;  // 0: fall back to VOLLEY_SLOTS, then the built-in default
  std::uint64_t seed = 42;
  double tolerance = 1e-9;
  std::string output = "-";
};

void add_run_config(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--slots", cfg.slots, "slot count (power of two; overrides VOLLEY_SLOTS)");
  sub->add_option("--seed", cfg.seed, "seed for any derived randomness");
  sub->add_option("--tolerance", cfg.tolerance, "verification tolerance (must be positive)");
  sub->add_option("--output", cfg.output, "report destination, '-' for stdout");
}

std::size_t resolve_slots(const RunConfig& cfg) {
  if (cfg.slots == 0) return volley::env_default_slots();
  if (!volley::is_power_of_two(cfg.slots))
    throw volley::Error("--slots must be a power of two, got " + std::to_string(cfg.slots));
  return cfg.slots;
}

void check_tolerance(const RunConfig& cfg) {
  if (!(cfg.tolerance > 0.0))
    throw volley::Error("--tolerance must be positive, got " + std::to_string(cfg.tolerance));
}

void emit(const RunConfig& cfg, const ordered_json& report) {
  if (cfg.output == "-") {
    std::cout << report.dump(2) << "\n";
    return;
  }
  std::ofstream out(cfg.output);
  if (!out) throw volley::MissingFile("cannot open " + cfg.output + " for writing");
  out << report.dump(2) << "\n";
}

ordered_json ledger_json(const volley::OpCounts& c) {
  ordered_json j;
  j["rotations"] = c.rotations;
  j["cipher_mults"] = c.cipher_mults;
  j["const_mults"] = c.const_mults;
  j["adds"] = c.adds;
  return j;
}

bool looks_like_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw volley::MissingFile("cannot open " + path);
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() < 4) return false;
  const std::uint32_t magic = (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
                              (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  return magic == volley::kIdxImageMagic;
}

std::vector<volley::Matrix> load_kernel_dir(const std::string& dir, std::size_t kh,
                                            std::size_t kw) {
  std::vector<volley::Matrix> kernels;
  for (std::size_t k = 0;; ++k) {
    const fs::path p = fs::path(dir) / ("conv_k" + std::to_string(k) + ".csv");
    if (!fs::exists(p)) break;
    volley::Matrix m = volley::Matrix::read_csv(p.string());
    if (m.rows() != kh || m.cols() != kw)
      throw volley::ShapeMismatch(p.string() + " is " + std::to_string(m.rows()) + "x" +
                                  std::to_string(m.cols()) + ", expected " + std::to_string(kh) +
                                  "x" + std::to_string(kw));
    kernels.push_back(std::move(m));
  }
  if (kernels.empty()) throw volley::MissingFile("no conv_k0.csv in " + dir);
  return kernels;
}

// ---- matmul ---------------------------------------------------------------

struct MatmulArgs {
  RunConfig cfg;
  std::string a_path, b_path;
  std::string result_path = "matmul_result.csv";
  bool verify = false;
};

int run_matmul(const MatmulArgs& args) {
  check_tolerance(args.cfg);
  volley::SlotEngine eng(resolve_slots(args.cfg));
  const volley::Matrix a = volley::Matrix::read_csv(args.a_path);
  const volley::Matrix b = volley::Matrix::read_csv(args.b_path);

  volley::PackedMatrix pa = volley::pack_matrix(eng, a, eng.default_slots());
  const volley::OpCounts before = eng.counts();
  const volley::Matrix result = volley::unpack(eng, volley::he_matmul(eng, pa, b));
  const volley::OpCounts ledger = eng.counts() - before;
  result.write_csv(args.result_path);

  ordered_json report;
  report["result_path"] = args.result_path;
  int rc = 0;
  if (args.verify) {
    const volley::Matrix plain = volley::matmul_plain(a, b);
    double err = 0.0;
    for (std::size_t i = 0; i < result.values().size(); ++i)
      err = std::max(err, std::abs(result.values()[i] - plain.values()[i]));
    report["max_abs_err"] = err;
    if (err > args.cfg.tolerance) rc = 2;
  }
  report["ledger"] = ledger_json(ledger);
  emit(args.cfg, report);
  return rc;
}

// ---- conv -----------------------------------------------------------------

struct ConvArgs {
  RunConfig cfg;
  std::string images_path, kernels_dir;
  std::size_t h = 0, w = 0, kh = 0, kw = 0;
  std::string result_path = "conv_features.csv";
  bool verify = false;
};

int run_conv(const ConvArgs& args) {
  check_tolerance(args.cfg);
  volley::SlotEngine eng(resolve_slots(args.cfg));

  volley::Matrix images(1, 1);
  if (looks_like_idx_images(args.images_path)) {
    images = volley::load_idx_images(args.images_path);
  } else {
    images = volley::Matrix::read_csv(args.images_path);
    if (images.rows() == args.h && images.cols() == args.w) {
      volley::Matrix flat(1, args.h * args.w);
      flat.values() = images.values();
      images = std::move(flat);
    }
  }
  if (images.cols() != args.h * args.w)
    throw volley::ShapeMismatch("images are " + std::to_string(images.cols()) +
                                " pixels wide, expected h*w = " +
                                std::to_string(args.h * args.w));

  volley::ConvSpec spec;
  spec.h = args.h;
  spec.w = args.w;
  spec.kh = args.kh;
  spec.kw = args.kw;
  spec.batch = images.rows();
  spec.kernels = load_kernel_dir(args.kernels_dir, args.kh, args.kw);
  spec.biases.assign(spec.kernels.size(), 0.0);
  spec.validate(eng.default_slots());

  volley::PackedMatrix ct = volley::pack_matrix(eng, images, eng.default_slots());
  const volley::OpCounts before = eng.counts();
  auto maps = volley::he_conv2d(eng, ct, spec);
  const volley::OpCounts pre_rec = eng.counts();
  volley::PackedMatrix features = volley::reconstruct_representation(eng, maps, spec);
  const volley::OpCounts after = eng.counts();
  const volley::Matrix result = volley::unpack(eng, features);
  result.write_csv(args.result_path);

  const std::uint64_t rec_rotations = (after - pre_rec).rotations;
  const std::uint64_t budget = spec.kernels.size() * (spec.out_h() + 1);

  ordered_json report;
  report["result_path"] = args.result_path;
  report["batch"] = spec.batch;
  report["kernels"] = spec.kernels.size();
  report["out_h"] = spec.out_h();
  report["out_w"] = spec.out_w();
  report["reconstruction_rotations"] = rec_rotations;
  report["rotation_budget"] = budget;
  report["within_budget"] = rec_rotations <= budget;

  int rc = 0;
  if (args.verify) {
    const auto plain = volley::plain_conv2d(images, spec);
    const std::size_t map_len = spec.out_h() * spec.out_w();
    double err = 0.0;
    for (std::size_t k = 0; k < plain.size(); ++k)
      for (std::size_t i = 0; i < spec.batch; ++i)
        for (std::size_t j = 0; j < map_len; ++j)
          err = std::max(err, std::abs(result(i, k * map_len + j) - plain[k](i, j)));
    report["max_abs_err"] = err;
    if (err > args.cfg.tolerance) rc = 2;
  }
  report["ledger"] = ledger_json(after - before);
  emit(args.cfg, report);
  return rc;
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  RunConfig cfg;
  std::string model_dir, images_path, labels_path;
  std::size_t batch = 32;
  bool weights_plain = false;
};

int run_infer(const InferArgs& args) {
  check_tolerance(args.cfg);
  volley::SlotEngine eng(resolve_slots(args.cfg));
  const volley::CnnModel model = volley::load_model(args.model_dir);
  const volley::Matrix all_images = volley::load_idx_images(args.images_path);
  if (all_images.rows() < args.batch)
    throw volley::Error("need " + std::to_string(args.batch) + " images, file has " +
                        std::to_string(all_images.rows()));
  if (all_images.cols() != model.conv.h * model.conv.w)
    throw volley::ShapeMismatch("images are " + std::to_string(all_images.cols()) +
                                " pixels, model expects " +
                                std::to_string(model.conv.h * model.conv.w));

  volley::Matrix images(args.batch, all_images.cols());
  for (std::size_t i = 0; i < args.batch; ++i)
    for (std::size_t j = 0; j < all_images.cols(); ++j) images(i, j) = all_images(i, j);

  const auto t0 = std::chrono::steady_clock::now();
  const volley::ForwardResult res = volley::he_forward(eng, images, model, args.weights_plain);
  const auto t1 = std::chrono::steady_clock::now();
  const double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  const volley::Matrix plain = volley::plaintext_forward(images, model);
  double max_err = 0.0;
  for (std::size_t i = 0; i < res.logits.values().size(); ++i)
    max_err = std::max(max_err, std::abs(res.logits.values()[i] - plain.values()[i]));

  std::vector<std::size_t> argmax(args.batch);
  for (std::size_t i = 0; i < args.batch; ++i) argmax[i] = volley::argmax_row(res.logits, i);

  ordered_json report;
  if (!args.labels_path.empty()) {
    const std::vector<int> labels = volley::load_idx_labels(args.labels_path);
    if (labels.size() < args.batch)
      throw volley::Error("need " + std::to_string(args.batch) + " labels, file has " +
                          std::to_string(labels.size()));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < args.batch; ++i)
      if (static_cast<std::size_t>(labels[i]) == argmax[i]) ++hits;
    report["accuracy"] = static_cast<double>(hits) / static_cast<double>(args.batch);
  }
  report["per_image_argmax"] = argmax;
  report["max_err_vs_plain"] = max_err;
  report["ledger"] = ledger_json(res.ops);
  report["wall_time_ms"] = wall_ms;
  emit(args.cfg, report);
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  RunConfig cfg;
  std::string data_path, optimizer;
  std::size_t classes = 0, iters = 0;
  double epsilon = 1e-8;
  std::string weights_path = "weights.csv";
};

int run_train(const TrainArgs& args) {
  check_tolerance(args.cfg);
  const volley::LrDataset ds = volley::load_libsvm(args.data_path, args.classes);
  const volley::TrainResult result = args.optimizer == "nag"
                                         ? volley::train_nag(ds, args.iters, args.epsilon)
                                         : volley::train_adagrad(ds, args.iters, args.epsilon);
  result.W.write_csv(args.weights_path);

  ordered_json report;
  report["optimizer"] = args.optimizer;
  report["classes"] = ds.c;
  report["n"] = ds.n();
  report["d"] = ds.d();
  report["iters"] = args.iters;
  report["epsilon"] = args.epsilon;
  ordered_json trace = ordered_json::array();
  for (const auto& row : result.trace) {
    ordered_json t;
    t["iter"] = row.iter;
    t["loglik"] = row.loglik;
    t["grad_maxnorm"] = row.grad_maxnorm;
    trace.push_back(std::move(t));
  }
  report["trace"] = std::move(trace);
  report["weights_path"] = args.weights_path;
  emit(args.cfg, report);
  return 0;
}

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
  RunConfig cfg;
  std::string suite;
  bool inject_fault = false;
};

int run_verify(const VerifyArgs& args) {
  check_tolerance(args.cfg);
  const volley::VerifyReport r = volley::run_suite(args.suite, args.cfg.seed, args.inject_fault);
  ordered_json report;
  report["suite"] = r.suite;
  report["cases"] = r.cases;
  report["failures"] = r.failures;
  report["worst_err"] = r.worst_err;
  emit(args.cfg, report);
  return r.failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volley: SIMD slot-vector matrix toolkit"};
  app.require_subcommand(1);

  MatmulArgs matmul_args;
  CLI::App* matmul = app.add_subcommand("matmul", "packed matrix product A*B");
  matmul->add_option("--a", matmul_args.a_path, "left operand CSV")->required();
  matmul->add_option("--b", matmul_args.b_path, "right operand CSV")->required();
  matmul->add_option("--result", matmul_args.result_path, "where to write the product CSV");
  matmul->add_flag("--verify", matmul_args.verify, "compare against the plaintext product");
  add_run_config(matmul, matmul_args.cfg);

  ConvArgs conv_args;
  CLI::App* conv = app.add_subcommand("conv", "packed 2-D convolution");
  conv->set_help_flag("--help", "print help");  // frees -h; conv takes --h for height
  conv->add_option("--images", conv_args.images_path, "images, CSV or IDX")->required();
  conv->add_option("--kernels", conv_args.kernels_dir, "directory of conv_k<i>.csv")->required();
  conv->add_option("--h", conv_args.h, "image height")->required();
  conv->add_option("--w", conv_args.w, "image width")->required();
  conv->add_option("--kh", conv_args.kh, "kernel height")->required();
  conv->add_option("--kw", conv_args.kw, "kernel width")->required();
  conv->add_option("--result", conv_args.result_path, "where to write the feature CSV");
  conv->add_flag("--verify", conv_args.verify, "compare against the plaintext convolution");
  add_run_config(conv, conv_args.cfg);

  InferArgs infer_args;
  CLI::App* infer = app.add_subcommand("infer", "CNN forward pass on packed images");
  infer->add_option("--model", infer_args.model_dir, "model directory")->required();
  infer->add_option("--images", infer_args.images_path, "IDX image file")->required();
  infer->add_option("--labels", infer_args.labels_path, "IDX label file (enables accuracy)");
  infer->add_option("--batch", infer_args.batch, "images per run");
  infer->add_flag("--weights-plain", infer_args.weights_plain, "treat weights as plaintext");
  add_run_config(infer, infer_args.cfg);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "multiclass logistic regression");
  train->add_option("--data", train_args.data_path, "libsvm-format dataset")->required();
  train->add_option("--classes", train_args.classes, "number of classes")
      ->required()
      ->check(CLI::PositiveNumber);
  train->add_option("--optimizer", train_args.optimizer, "nag or adagrad")
      ->required()
      ->check(CLI::IsMember({"nag", "adagrad"}));
  train->add_option("--iters", train_args.iters, "iteration count")->required();
  train->add_option("--epsilon", train_args.epsilon, "curvature-bound stabilizer");
  train->add_option("--weights-out", train_args.weights_path, "where to write the weights CSV");
  add_run_config(train, train_args.cfg);

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "run a self-check suite");
  verify->add_option("--suite", verify_args.suite, "packing, matmul, conv, quadgrad, or all")
      ->required()
      ->check(CLI::IsMember({"packing", "matmul", "conv", "quadgrad", "all"}));
  verify->add_flag("--inject-fault", verify_args.inject_fault)->group("");  // harness self-test
  add_run_config(verify, verify_args.cfg);

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(matmul)) return run_matmul(matmul_args);
    if (app.got_subcommand(conv)) return run_conv(conv_args);
    if (app.got_subcommand(infer)) return run_infer(infer_args);
    if (app.got_subcommand(train)) return run_train(train_args);
    if (app.got_subcommand(verify)) return run_verify(verify_args);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const volley::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

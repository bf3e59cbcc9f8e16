#pragma once

// Multi-fidelity network.
//
//   y_L = LEAP_L(x, tau)
//   y_H = alpha_L * y_L + eps * (tanh(alpha_1) * f_l([x, y_L]) + tanh(alpha_2) * f_nl([x, y_L], tau))
//
// with LEAP(x, tau) = D(E(x)) + d(e(E(x) .* tau)). E ends in the latent layer
// of width n_lines, so the Hadamard product with tau is taken as written.
// f_l is a purely affine network; everything else uses tanh hidden layers.
//
// All trainable values sit in one flat vector: LEAP_L, f_l, f_nl, then
// (alpha_L, alpha_1, alpha_2).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfpf/dataset_io.hpp"
#include "mfpf/error.hpp"
#include "mfpf/nn.hpp"
#include "mfpf/rng.hpp"
#include "mfpf/scenario.hpp"
#include "mfpf/version.hpp"

namespace mfpf {

struct MfnnArch {
  int width = 64;        // hidden units per layer
  int depth = 2;         // hidden layers in each of E, D and e
  int linear_width = 64; // bottleneck of the affine net f_l; 0 maps [x, y_L] -> y directly
  double epsilon = 0.1;

  void check() const {
    if (width < 1 || depth < 0 || linear_width < 0) throw ValidationError("invalid MFNN architecture");
  }
  bool operator==(const MfnnArch&) const = default;
};

/// Four sub-networks of one LEAP block and their offsets in the flat vector.
struct LeapBlock {
  MlpSpec E, D, e, d;
  std::size_t off_E = 0, off_D = 0, off_e = 0, off_d = 0;
  int latent_dim = 0;

  static LeapBlock make(int n_in, int n_out, int latent, const MfnnArch& a) {
    LeapBlock b;
    b.latent_dim = latent;
    b.E.widths.push_back(n_in);
    for (int i = 0; i < a.depth; ++i) b.E.widths.push_back(a.width);
    b.E.widths.push_back(latent);
    b.E.output = Activation::Tanh;
    b.D.widths.push_back(latent);
    for (int i = 0; i < a.depth; ++i) b.D.widths.push_back(a.width);
    b.D.widths.push_back(n_out);
    b.e.widths.push_back(latent);
    for (int i = 0; i < std::max(a.depth, 1); ++i) b.e.widths.push_back(a.width);
    b.e.output = Activation::Tanh;
    b.d.widths = {a.width, n_out};
    return b;
  }

  std::size_t place(std::size_t offset) {
    off_E = offset;
    off_D = off_E + E.n_params();
    off_e = off_D + D.n_params();
    off_d = off_e + e.n_params();
    return off_d + d.n_params();
  }

  int in_width() const { return E.in_width(); }
  int out_width() const { return D.out_width(); }
};

struct LeapCache {
  MlpCache E, D, e, d;
  Matrix tau;
};

inline Matrix leap_forward(const LeapBlock& b, const double* p, const Matrix& x, const Matrix& tau,
                           LeapCache* cache = nullptr) {
  if (tau.cols() != b.latent_dim || tau.rows() != x.rows())
    throw ShapeError("topology batch is " + std::to_string(tau.rows()) + "x" + std::to_string(tau.cols()) +
                     ", expected " + std::to_string(x.rows()) + "x" + std::to_string(b.latent_dim));
  const Matrix h = mlp_forward(b.E, p + b.off_E, x, cache ? &cache->E : nullptr);
  Matrix y = mlp_forward(b.D, p + b.off_D, h, cache ? &cache->D : nullptr);
  const Matrix u = mlp_forward(b.e, p + b.off_e, h.cwiseProduct(tau), cache ? &cache->e : nullptr);
  y += mlp_forward(b.d, p + b.off_d, u, cache ? &cache->d : nullptr);
  if (cache) cache->tau = tau;
  return y;
}

inline Matrix leap_backward(const LeapBlock& b, const double* p, const LeapCache& c, const Matrix& dy, double* g) {
  Matrix dh = mlp_backward(b.D, p + b.off_D, c.D, dy, g + b.off_D);
  const Matrix du = mlp_backward(b.d, p + b.off_d, c.d, dy, g + b.off_d);
  const Matrix dm = mlp_backward(b.e, p + b.off_e, c.e, du, g + b.off_e);
  dh += dm.cwiseProduct(c.tau);
  return mlp_backward(b.E, p + b.off_E, c.E, dh, g + b.off_E);
}

/// Scalar form of the y_H composition.
inline double compose_high(double y_low, double y_lin, double y_nl, double alpha_L, double alpha_1, double alpha_2,
                           double epsilon) {
  return alpha_L * y_low + epsilon * (std::tanh(alpha_1) * y_lin + std::tanh(alpha_2) * y_nl);
}

struct MfnnCache {
  LeapCache low, nl;
  MlpCache lin;
  Matrix y_low, y_lin, y_nl;
};

/// Batch of normalized inputs with optional normalized targets.
struct Batch {
  Matrix x, tau, y;
  Eigen::Index size() const { return x.rows(); }
};

struct LossValue {
  double total = 0.0;
  double low = 0.0;
  double high = 0.0;
  double penalty = 0.0;
};

class MfnnModel {
 public:
  static constexpr std::size_t kAlphaCount = 3;

  MfnnModel() = default;

  MfnnModel(int n_x, int n_lines, MfnnArch arch = {}) : n_x_(n_x), n_lines_(n_lines), arch_(arch) {
    if (n_x < 1 || n_lines < 1) throw ValidationError("MFNN needs at least one feature and one line");
    arch_.check();
    const int n_y = 4 * n_lines;
    low_ = LeapBlock::make(n_x, n_y, n_lines, arch_);
    nl_ = LeapBlock::make(n_x + n_y, n_y, n_lines, arch_);
    lin_.widths = arch_.linear_width > 0 ? std::vector<int>{n_x + n_y, arch_.linear_width, n_y}
                                         : std::vector<int>{n_x + n_y, n_y};
    lin_.hidden = lin_.output = Activation::Identity;
    std::size_t off = low_.place(0);
    off_lin_ = off;
    off = nl_.place(off + lin_.n_params());
    off_alpha_ = off;
    params_ = Vector::Zero(static_cast<Eigen::Index>(off + kAlphaCount));
    mask_ = Vector::Zero(params_.size());
    for (const auto* blk : {&low_, &nl_}) {
      weight_mask(blk->E, mask_.data() + blk->off_E);
      weight_mask(blk->D, mask_.data() + blk->off_D);
      weight_mask(blk->e, mask_.data() + blk->off_e);
      weight_mask(blk->d, mask_.data() + blk->off_d);
    }
    weight_mask(lin_, mask_.data() + off_lin_);
    norm_ = NormStats::identity(static_cast<std::size_t>(n_x), static_cast<std::size_t>(n_y));
  }

  /// Glorot weights, zero biases, alpha_L = 1 and alpha_1 = alpha_2 = 0, so
  /// the untrained model predicts y_H = y_L.
  void initialize(Rng& rng) {
    double* p = params_.data();
    for (const auto* blk : {&low_, &nl_}) {
      glorot_uniform_init(blk->E, p + blk->off_E, rng);
      glorot_uniform_init(blk->D, p + blk->off_D, rng);
      glorot_uniform_init(blk->e, p + blk->off_e, rng);
      glorot_uniform_init(blk->d, p + blk->off_d, rng);
    }
    glorot_uniform_init(lin_, p + off_lin_, rng);
    alpha_L() = 1.0;
    alpha_1() = 0.0;
    alpha_2() = 0.0;
  }

  int n_x() const { return n_x_; }
  int n_lines() const { return n_lines_; }
  int n_y() const { return 4 * n_lines_; }
  const MfnnArch& arch() const { return arch_; }
  const LeapBlock& low_block() const { return low_; }
  const LeapBlock& nonlinear_block() const { return nl_; }
  const MlpSpec& linear_spec() const { return lin_; }
  std::size_t linear_offset() const { return off_lin_; }
  std::size_t alpha_offset() const { return off_alpha_; }
  /// Entries [0, low_size()) belong to the low-fidelity network.
  std::size_t low_size() const { return off_lin_; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  const Vector& weight_mask_vector() const { return mask_; }

  double& alpha_L() { return params_[static_cast<Eigen::Index>(off_alpha_)]; }
  double& alpha_1() { return params_[static_cast<Eigen::Index>(off_alpha_ + 1)]; }
  double& alpha_2() { return params_[static_cast<Eigen::Index>(off_alpha_ + 2)]; }
  double alpha_L() const { return params_[static_cast<Eigen::Index>(off_alpha_)]; }
  double alpha_1() const { return params_[static_cast<Eigen::Index>(off_alpha_ + 1)]; }
  double alpha_2() const { return params_[static_cast<Eigen::Index>(off_alpha_ + 2)]; }

  NormStats& norm() { return norm_; }
  const NormStats& norm() const { return norm_; }
  std::string case_name;
  std::uint64_t case_hash = 0;

  double weight_penalty() const { return (params_.array().square() * mask_.array()).sum(); }

  Matrix forward_low(const Matrix& x, const Matrix& tau, LeapCache* cache = nullptr) const {
    check_inputs(x, tau);
    return leap_forward(low_, params_.data(), x, tau, cache);
  }

  /// Returns y_H; y_L is left in cache->y_low when a cache is given.
  Matrix forward(const Matrix& x, const Matrix& tau, MfnnCache* cache = nullptr) const {
    check_inputs(x, tau);
    const double* p = params_.data();
    Matrix y_low = leap_forward(low_, p, x, tau, cache ? &cache->low : nullptr);
    Matrix z(x.rows(), n_x_ + n_y());
    z << x, y_low;
    Matrix y_lin = mlp_forward(lin_, p + off_lin_, z, cache ? &cache->lin : nullptr);
    Matrix y_nl = leap_forward(nl_, p, z, tau, cache ? &cache->nl : nullptr);
    const double eps = arch_.epsilon;
    Matrix y_high = alpha_L() * y_low + (eps * std::tanh(alpha_1())) * y_lin + (eps * std::tanh(alpha_2())) * y_nl;
    if (cache) {
      cache->y_low = std::move(y_low);
      cache->y_lin = std::move(y_lin);
      cache->y_nl = std::move(y_nl);
    }
    return y_high;
  }

  /// Accumulates into `grad` the gradient of a loss whose derivatives are
  /// d_high w.r.t. y_H and d_low_extra w.r.t. y_L (beyond its path through y_H).
  void backward(const MfnnCache& c, const Matrix& d_high, const Matrix* d_low_extra, Vector& grad) const {
    const double* p = params_.data();
    double* g = grad.data();
    const double eps = arch_.epsilon;
    const double t1 = std::tanh(alpha_1()), t2 = std::tanh(alpha_2());
    const auto a = static_cast<Eigen::Index>(off_alpha_);
    grad[a] += (d_high.array() * c.y_low.array()).sum();
    grad[a + 1] += eps * (1.0 - t1 * t1) * (d_high.array() * c.y_lin.array()).sum();
    grad[a + 2] += eps * (1.0 - t2 * t2) * (d_high.array() * c.y_nl.array()).sum();
    Matrix dz = mlp_backward(lin_, p + off_lin_, c.lin, (eps * t1) * d_high, g + off_lin_);
    dz += leap_backward(nl_, p, c.nl, (eps * t2) * d_high, g);
    Matrix d_low = alpha_L() * d_high + dz.rightCols(n_y());
    if (d_low_extra) d_low += *d_low_extra;
    leap_backward(low_, p, c.low, d_low, g);
  }

  /// Two-fidelity mean squared error plus lambda * sum of squared weights.
  /// Either batch may be empty, not both. Gradient is written to *grad if given.
  LossValue loss(const Batch& low, const Batch& high, double lambda, Vector* grad = nullptr) const {
    if (low.size() == 0 && high.size() == 0) throw ValidationError("loss needs a non-empty batch");
    if (grad) *grad = Vector::Zero(params_.size());
    LossValue v;
    if (low.size() > 0) {
      if (low.y.rows() != low.size() || low.y.cols() != n_y()) throw ShapeError("low-fidelity target shape");
      LeapCache lc;
      const Matrix r = forward_low(low.x, low.tau, grad ? &lc : nullptr) - low.y;
      const double n = static_cast<double>(r.size());
      v.low = r.squaredNorm() / n;
      if (grad) leap_backward(low_, params_.data(), lc, (2.0 / n) * r, grad->data());
    }
    if (high.size() > 0) {
      if (high.y.rows() != high.size() || high.y.cols() != n_y()) throw ShapeError("high-fidelity target shape");
      MfnnCache hc;
      const Matrix r = forward(high.x, high.tau, grad ? &hc : nullptr) - high.y;
      const double n = static_cast<double>(r.size());
      v.high = r.squaredNorm() / n;
      if (grad) backward(hc, (2.0 / n) * r, nullptr, *grad);
    }
    v.penalty = lambda * weight_penalty();
    if (grad && lambda != 0.0) *grad += (2.0 * lambda) * params_.cwiseProduct(mask_);
    v.total = v.low + v.high + v.penalty;
    return v;
  }

  /// Raw features in, denormalized y_H out; one row per scenario.
  Matrix predict(const Matrix& x_raw, const Matrix& tau) const {
    return denormalize_rows(forward(normalize_rows(x_raw), tau));
  }

  Matrix normalize_rows(const Matrix& x_raw) const {
    if (x_raw.cols() != n_x_) throw ShapeError("feature width mismatch");
    const auto m = Eigen::Map<const Eigen::RowVectorXd>(norm_.x_mean.data(), n_x_);
    const auto s = Eigen::Map<const Eigen::RowVectorXd>(norm_.x_std.data(), n_x_);
    return (x_raw.rowwise() - m).array().rowwise() / s.array();
  }

  Matrix denormalize_rows(const Matrix& y) const {
    const auto m = Eigen::Map<const Eigen::RowVectorXd>(norm_.y_mean.data(), n_y());
    const auto s = Eigen::Map<const Eigen::RowVectorXd>(norm_.y_std.data(), n_y());
    return (y.array().rowwise() * s.array()).rowwise() + m.array();
  }

 private:
  void check_inputs(const Matrix& x, const Matrix& tau) const {
    if (x.cols() != n_x_)
      throw ShapeError("feature width " + std::to_string(x.cols()) + ", model expects " + std::to_string(n_x_));
    if (tau.cols() != n_lines_ || tau.rows() != x.rows())
      throw ShapeError("topology width " + std::to_string(tau.cols()) + ", model was trained for " +
                       std::to_string(n_lines_) + " lines");
  }

  int n_x_ = 0;
  int n_lines_ = 0;
  MfnnArch arch_;
  LeapBlock low_, nl_;
  MlpSpec lin_;
  std::size_t off_lin_ = 0, off_alpha_ = 0;
  Vector params_, mask_;
  NormStats norm_;
};

// ---------------------------------------------------------------------------
// Training

enum class TrainMode { Joint, TwoStage };

struct TrainConfig {
  double lambda = 1e-5;
  double lr = 1e-3;
  int epochs = 500;
  int batch_size = 64;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::Joint;
  bool keep_best = true;  // return the parameters with the lowest validation loss
  MfnnArch arch{};

  void check() const {
    if (!(lambda >= 0)) throw ValidationError("lambda must be >= 0");
    if (!(lr > 0)) throw ValidationError("learning rate must be > 0");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    arch.check();
  }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double alpha_L = 0.0, alpha_1 = 0.0, alpha_2 = 0.0;
  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  MfnnModel model;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

inline Json to_json(const MfnnArch& a) {
  return {{"width", a.width}, {"depth", a.depth}, {"linear_width", a.linear_width}, {"epsilon", a.epsilon}};
}

inline MfnnArch arch_from_json(const Json& j, MfnnArch a = {}) {
  for (const auto& [key, v] : j.items()) {
    if (key == "width") a.width = v.get<int>();
    else if (key == "depth") a.depth = v.get<int>();
    else if (key == "linear_width") a.linear_width = v.get<int>();
    else if (key == "epsilon") a.epsilon = v.get<double>();
    else throw ValidationError("unknown architecture key '" + key + "'");
  }
  return a;
}

inline Json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},   {"lr", c.lr},
          {"epochs", c.epochs},   {"batch_size", c.batch_size},
          {"seed", c.seed},       {"mode", c.mode == TrainMode::Joint ? "joint" : "two-stage"},
          {"keep_best", c.keep_best}, {"arch", to_json(c.arch)}};
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  for (const auto& [key, v] : j.items()) {
    if (key == "lambda") c.lambda = v.get<double>();
    else if (key == "lr") c.lr = v.get<double>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "keep_best") c.keep_best = v.get<bool>();
    else if (key == "arch") c.arch = arch_from_json(v, c.arch);
    else if (key == "mode") {
      const auto s = v.get<std::string>();
      if (s == "joint") c.mode = TrainMode::Joint;
      else if (s == "two-stage") c.mode = TrainMode::TwoStage;
      else throw ValidationError("unknown training mode '" + s + "'");
    } else throw ValidationError("unknown training config key '" + key + "'");
  }
  return c;
}

namespace detail {

enum class Label { Low, High, Truth };

inline Batch gather(const Dataset& ds, const std::vector<int>& idx, Label label) {
  const auto nx = static_cast<Eigen::Index>(ds.n_features());
  const auto nl = static_cast<Eigen::Index>(ds.n_lines);
  const auto ny = static_cast<Eigen::Index>(ds.n_targets());
  Batch b{Matrix(static_cast<Eigen::Index>(idx.size()), nx), Matrix(static_cast<Eigen::Index>(idx.size()), nl),
          Matrix(static_cast<Eigen::Index>(idx.size()), ny)};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& s = ds.scenarios[static_cast<std::size_t>(idx[r])];
    const auto row = static_cast<Eigen::Index>(r);
    b.x.row(row) = Eigen::Map<const Eigen::RowVectorXd>(s.x.data(), nx);
    for (Eigen::Index l = 0; l < nl; ++l) b.tau(row, l) = s.tau[static_cast<std::size_t>(l)];
    const auto& y = label == Label::Low ? s.y_low : (label == Label::High ? s.y_high : s.y_truth);
    if (!y) throw ValidationError("scenario " + std::to_string(idx[r]) + " lacks the requested label");
    b.y.row(row) = Eigen::Map<const Eigen::RowVectorXd>(y->data(), ny);
  }
  return b;
}

inline std::vector<int> with_label(const Dataset& ds, const std::vector<int>& idx, Label label) {
  std::vector<int> out;
  for (int i : idx) {
    const auto& s = ds.scenarios[static_cast<std::size_t>(i)];
    if ((label == Label::Low && s.y_low) || (label == Label::High && s.y_high) || (label == Label::Truth && s.y_truth))
      out.push_back(i);
  }
  return out;
}

}  // namespace detail

/// Minibatch Adam on the two-fidelity loss. Every step uses one low- and one
/// high-fidelity minibatch (the latter cycling through a reshuffled pool of
/// NR-labeled training scenarios). Deterministic for a given dataset and config.
inline TrainResult train(const Dataset& raw, const TrainConfig& cfg) {
  cfg.check();
  const Dataset ds = raw.normalized ? raw : normalize(raw);
  const auto low_pool = detail::with_label(ds, ds.split.train, detail::Label::Low);
  const auto high_pool = detail::with_label(ds, ds.split.train, detail::Label::High);
  if (low_pool.empty() && high_pool.empty()) throw ValidationError("training split has no labeled scenarios");

  TrainResult res;
  res.model = MfnnModel(static_cast<int>(ds.n_features()), static_cast<int>(ds.n_lines), cfg.arch);
  auto& model = res.model;
  {
    auto init_rng = make_rng(cfg.seed, 0, "init");
    model.initialize(init_rng);
  }
  model.norm() = ds.norm;
  model.case_name = ds.case_name;
  model.case_hash = ds.case_hash;

  const Batch val_low = detail::gather(ds, detail::with_label(ds, ds.split.val, detail::Label::Low), detail::Label::Low);
  const Batch val_high =
      detail::gather(ds, detail::with_label(ds, ds.split.val, detail::Label::High), detail::Label::High);
  const bool has_val = val_low.size() + val_high.size() > 0;

  auto rng = make_rng(cfg.seed, 0, "batches");
  AdamState adam(model.params().size(), cfg.lr);
  std::vector<int> low_order = low_pool, high_order = high_pool;
  std::size_t high_cursor = high_order.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  Vector best = model.params();
  double best_val = std::numeric_limits<double>::infinity();

  auto next_high = [&]() {
    std::vector<int> idx;
    const std::size_t n = std::min(bs, high_order.size());
    while (idx.size() < n) {
      if (high_cursor >= high_order.size()) {
        std::shuffle(high_order.begin(), high_order.end(), rng);
        high_cursor = 0;
      }
      idx.push_back(high_order[high_cursor++]);
    }
    return idx;
  };

  const Eigen::Index n_low_params = static_cast<Eigen::Index>(model.low_size());
  auto run_stage = [&](int epochs, int epoch_base, bool use_low, bool use_high, bool freeze_low) {
    const bool drive_low = use_low && !low_order.empty();
    std::vector<int>& order = drive_low ? low_order : high_order;
    for (int ep = 0; ep < epochs; ++ep) {
      std::shuffle(order.begin(), order.end(), rng);
      double sum = 0.0;
      int steps = 0;
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::vector<int> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
        Batch lb, hb;
        if (drive_low) {
          lb = detail::gather(ds, chunk, detail::Label::Low);
          if (use_high && !high_order.empty()) hb = detail::gather(ds, next_high(), detail::Label::High);
        } else {
          hb = detail::gather(ds, chunk, detail::Label::High);
        }
        Vector grad;
        const auto v = model.loss(lb, hb, cfg.lambda, &grad);
        if (!std::isfinite(v.total) || !grad.allFinite()) {
          std::ostringstream os;
          os << "training diverged at epoch " << epoch_base + ep + 1 << ", step " << steps + 1 << " (loss " << v.total
             << ", low " << v.low << ", high " << v.high << ", alpha_L " << model.alpha_L() << ")";
          throw Error(os.str());
        }
        if (freeze_low) grad.head(n_low_params).setZero();
        adam_step(adam, model.params(), grad);
        sum += v.total;
        ++steps;
      }
      EpochLog e;
      e.epoch = epoch_base + ep + 1;
      e.train_loss = steps ? sum / steps : 0.0;
      if (has_val) {
        const Batch empty;
        const auto vl = model.loss(use_low ? val_low : empty, use_high ? val_high : empty, 0.0);
        e.val_loss = vl.low + vl.high;
      }
      e.alpha_L = model.alpha_L();
      e.alpha_1 = model.alpha_1();
      e.alpha_2 = model.alpha_2();
      res.log.push_back(e);
      // in two-stage mode only the final stage competes for "best"
      if (cfg.keep_best && has_val && (use_high || high_order.empty()) && e.val_loss < best_val) {
        best_val = e.val_loss;
        best = model.params();
        res.best_epoch = e.epoch;
      }
    }
  };

  if (cfg.mode == TrainMode::Joint) {
    run_stage(cfg.epochs, 0, true, true, false);
  } else {
    run_stage(cfg.epochs, 0, true, false, false);
    if (!high_order.empty()) {
      adam = AdamState(model.params().size(), cfg.lr);
      run_stage(cfg.epochs, cfg.epochs, false, true, true);
    }
  }
  if (cfg.keep_best && res.best_epoch > 0) model.params() = best;
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints: `mfpf-model v1` header line, then one JSON document.

inline std::string serialize_model(const MfnnModel& m, const Json& provenance = Json::object()) {
  Json j;
  j["tool"] = kToolVersion;
  j["case"] = m.case_name;
  j["case_hash"] = m.case_hash;
  j["n_x"] = m.n_x();
  j["n_lines"] = m.n_lines();
  j["arch"] = to_json(m.arch());
  j["alpha_L"] = m.alpha_L();
  j["alpha_1"] = m.alpha_1();
  j["alpha_2"] = m.alpha_2();
  j["epsilon"] = m.arch().epsilon;
  j["norm"] = to_json(m.norm());
  j["n_params"] = m.params().size();
  j["params"] = format_vector(m.params());
  j["provenance"] = provenance;
  return "mfpf-model v1\n" + j.dump(1) + "\n";
}

inline MfnnModel parse_model(std::string_view text, Json* provenance = nullptr) {
  const auto nl = text.find('\n');
  if (nl == std::string_view::npos || detail::trim(text.substr(0, nl)) != "mfpf-model v1")
    throw ParseError(1, "", "expected header 'mfpf-model v1'");
  try {
    const Json j = Json::parse(text.substr(nl + 1));
    MfnnModel m(j.at("n_x").get<int>(), j.at("n_lines").get<int>(), arch_from_json(j.at("arch")));
    m.params() = parse_vector(j.at("params").get<std::string>(), m.params().size());
    if (m.alpha_L() != j.at("alpha_L").get<double>() || m.alpha_1() != j.at("alpha_1").get<double>() ||
        m.alpha_2() != j.at("alpha_2").get<double>())
      throw ValidationError("checkpoint alpha values disagree with the parameter vector");
    m.norm() = norm_from_json(j.at("norm"));
    if (m.norm().x_mean.size() != static_cast<std::size_t>(m.n_x()) ||
        m.norm().y_mean.size() != static_cast<std::size_t>(m.n_y()))
      throw ShapeError("checkpoint normalization does not match the model dimensions");
    m.case_name = j.at("case").get<std::string>();
    m.case_hash = j.at("case_hash").get<std::uint64_t>();
    if (provenance) *provenance = j.value("provenance", Json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(2, "model", e.what());
  }
}

inline void save_model(const MfnnModel& m, const std::string& path, const Json& provenance = Json::object()) {
  write_text_file(path, serialize_model(m, provenance));
}

inline MfnnModel load_model(const std::string& path, Json* provenance = nullptr) {
  return parse_model(read_text_file(path), provenance);
}

}  // namespace mfpf

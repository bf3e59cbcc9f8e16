#pragma once

// Dense feed-forward networks in double precision.
//
// Batches are row-major in meaning (one sample per row) and stored as
// Eigen::MatrixXd of shape batch x width. Parameters of a network live in a
// flat buffer: for each layer the weight matrix (fan_in x fan_out,
// column-major) followed by its bias vector.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfpf/error.hpp"
#include "mfpf/rng.hpp"

namespace mfpf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Tanh, Identity };

inline const char* activation_name(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw ValidationError("unknown activation '" + s + "'");
}

struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., output
  Activation hidden = Activation::Tanh;
  Activation output = Activation::Identity;

  std::size_t n_layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  int in_width() const { return widths.front(); }
  int out_width() const { return widths.back(); }

  Activation activation(std::size_t layer) const { return layer + 1 == n_layers() ? output : hidden; }

  void check() const {
    if (widths.size() < 2) throw ValidationError("an MLP needs at least one layer");
    for (int w : widths)
      if (w < 1) throw ValidationError("layer widths must be >= 1");
  }

  std::size_t weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l)
      off += static_cast<std::size_t>(widths[l] + 1) * static_cast<std::size_t>(widths[l + 1]);
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const {
    return weight_offset(layer) + static_cast<std::size_t>(widths[layer]) * static_cast<std::size_t>(widths[layer + 1]);
  }
  std::size_t n_params() const { return weight_offset(n_layers()); }

  bool operator==(const MlpSpec&) const = default;
};

/// Post-activation outputs of every layer; a[0] is the input batch.
struct MlpCache {
  std::vector<Matrix> a;
};

namespace detail {

inline Eigen::Map<const Matrix> weights(const MlpSpec& s, const double* p, std::size_t l) {
  return {p + s.weight_offset(l), s.widths[l], s.widths[l + 1]};
}
inline Eigen::Map<const Eigen::RowVectorXd> bias(const MlpSpec& s, const double* p, std::size_t l) {
  return {p + s.bias_offset(l), s.widths[l + 1]};
}

}  // namespace detail

inline Matrix mlp_forward(const MlpSpec& s, const double* p, const Matrix& x, MlpCache* cache = nullptr) {
  if (x.cols() != s.in_width())
    throw ShapeError("MLP input width " + std::to_string(x.cols()) + ", expected " + std::to_string(s.in_width()));
  if (cache) {
    cache->a.resize(s.n_layers() + 1);
    cache->a[0] = x;
  }
  Matrix h = x;
  for (std::size_t l = 0; l < s.n_layers(); ++l) {
    Matrix z = h * detail::weights(s, p, l);
    z.rowwise() += detail::bias(s, p, l);
    if (s.activation(l) == Activation::Tanh) z = z.array().tanh();
    h = std::move(z);
    if (cache) cache->a[l + 1] = h;
  }
  return h;
}

/// Reverse pass. Adds dL/dparams into `grad` (same layout as `p`) and returns
/// dL/dx.
inline Matrix mlp_backward(const MlpSpec& s, const double* p, const MlpCache& cache, const Matrix& dy, double* grad) {
  if (cache.a.size() != s.n_layers() + 1) throw ShapeError("MLP cache does not match the spec");
  if (dy.rows() != cache.a[0].rows() || dy.cols() != s.out_width()) throw ShapeError("MLP upstream gradient shape");
  Matrix g = dy;
  for (std::size_t l = s.n_layers(); l-- > 0;) {
    if (s.activation(l) == Activation::Tanh) g.array() *= 1.0 - cache.a[l + 1].array().square();
    Eigen::Map<Matrix> gw(grad + s.weight_offset(l), s.widths[l], s.widths[l + 1]);
    Eigen::Map<Eigen::RowVectorXd> gb(grad + s.bias_offset(l), s.widths[l + 1]);
    gw.noalias() += cache.a[l].transpose() * g;
    gb += g.colwise().sum();
    g = g * detail::weights(s, p, l).transpose();
  }
  return g;
}

/// Weights ~ U(-L, L) with L = sqrt(6 / (fan_in + fan_out)); biases 0.
inline void glorot_uniform_init(const MlpSpec& s, double* p, Rng& rng) {
  for (std::size_t l = 0; l < s.n_layers(); ++l) {
    const double lim = std::sqrt(6.0 / (s.widths[l] + s.widths[l + 1]));
    std::uniform_real_distribution<double> u(-lim, lim);
    const auto nw = static_cast<std::size_t>(s.widths[l]) * static_cast<std::size_t>(s.widths[l + 1]);
    double* w = p + s.weight_offset(l);
    for (std::size_t i = 0; i < nw; ++i) w[i] = u(rng);
    std::fill_n(p + s.bias_offset(l), s.widths[l + 1], 0.0);
  }
}

inline Vector glorot_uniform_init(const MlpSpec& s, Rng& rng) {
  s.check();
  Vector p(static_cast<Eigen::Index>(s.n_params()));
  glorot_uniform_init(s, p.data(), rng);
  return p;
}

/// 1 for weight entries, 0 for biases.
inline void weight_mask(const MlpSpec& s, double* mask) {
  for (std::size_t l = 0; l < s.n_layers(); ++l) {
    std::fill(mask + s.weight_offset(l), mask + s.bias_offset(l), 1.0);
    std::fill_n(mask + s.bias_offset(l), s.widths[l + 1], 0.0);
  }
}

/// A network together with its own parameter buffer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)), params_(glorot_uniform_init(spec_, rng)) {}
  Mlp(MlpSpec spec, Vector params) : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.check();
    if (params_.size() != static_cast<Eigen::Index>(spec_.n_params())) throw ShapeError("parameter count mismatch");
  }

  const MlpSpec& spec() const { return spec_; }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const {
    return mlp_forward(spec_, params_.data(), x, cache);
  }
  Matrix backward(const MlpCache& cache, const Matrix& dy, Vector& grad) const {
    if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
    return mlp_backward(spec_, params_.data(), cache, dy, grad.data());
  }

 private:
  MlpSpec spec_;
  Vector params_;
};

struct AdamState {
  long step = 0;
  Vector m, v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  explicit AdamState(Eigen::Index n = 0, double lr_ = 1e-3) : m(Vector::Zero(n)), v(Vector::Zero(n)), lr(lr_) {}
};

/// One Adam update with bias correction.
inline void adam_step(AdamState& st, Vector& params, const Vector& grads) {
  if (st.m.size() != params.size() || grads.size() != params.size()) throw ShapeError("Adam state shape mismatch");
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grads;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -= st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps_hat);
}

/// Central finite differences of a scalar function of the parameters.
inline Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& params,
                                         double h = 1e-5) {
  Vector g(params.size());
  Vector p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = f(p);
    p[i] = orig - h;
    const double fm = f(p);
    p[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps entries
/// that are zero up to rounding from dominating the ratio.
inline double max_relative_error(const Vector& a, const Vector& b, double floor = 1e-4) {
  if (a.size() != b.size()) throw ShapeError("gradient length mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
  return worst;
}

/// Space-separated shortest round-trip text; parse_vector restores it bit for bit.
inline std::string format_vector(const Vector& v) {
  std::string out;
  out.reserve(static_cast<std::size_t>(v.size()) * 24);
  char buf[32];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v[i]);
    out.append(buf, p);
  }
  return out;
}

inline Vector parse_vector(const std::string& s, Eigen::Index expected = -1) {
  std::vector<double> vals;
  const char* p = s.data();
  const char* end = s.data() + s.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    double v = 0.0;
    auto [q, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) throw ParseError(0, "params", "bad number in parameter vector");
    vals.push_back(v);
    p = q;
  }
  if (expected >= 0 && static_cast<Eigen::Index>(vals.size()) != expected)
    throw ShapeError("parameter vector has " + std::to_string(vals.size()) + " entries, expected " +
                     std::to_string(expected));
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace mfpf

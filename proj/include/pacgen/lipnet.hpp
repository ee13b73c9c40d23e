#pragma once

// Fully connected generator / critic networks.
//
// Parameters live in one flat vector: for every layer, the out x in weight
// matrix in row-major order followed by the out-vector of biases. Hidden
// layers apply the architecture's activation; the output layer is affine.
//
// Critics are made 1-Lipschitz in l2 by replacing every weight matrix with its
// Björck orthonormalization (columns orthonormal for tall matrices, rows for
// wide ones) and using GroupSort, which only permutes coordinates.

#include <Eigen/Core>
#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pacgen/autodiff.hpp"
#include "pacgen/error.hpp"

namespace pacgen::lipnet {

using Matrix = Eigen::MatrixXd;
using ParamVector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { kGroupSort, kReLU };

struct NetArchitecture {
  std::vector<Eigen::Index> widths;  // input dim first, output dim last
  Activation activation = Activation::kGroupSort;
  Eigen::Index group_size = 2;

  std::size_t num_layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  Eigen::Index input_dim() const { return widths.front(); }
  Eigen::Index output_dim() const { return widths.back(); }

  Eigen::Index num_params() const {
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) total += widths[l + 1] * widths[l] + widths[l + 1];
    return total;
  }

  /// Only GroupSort networks with orthonormalized weights are certified 1-Lipschitz.
  bool certified() const { return activation == Activation::kGroupSort; }

  void validate() const {
    detail::require(widths.size() >= 2, "architecture needs at least an input and an output width");
    for (Eigen::Index w : widths) detail::require(w > 0, "layer widths must be positive");
    if (activation == Activation::kGroupSort) {
      detail::require(group_size >= 1, "GroupSort group size must be positive");
      for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
        detail::require(widths[l] % group_size == 0, "GroupSort group size must divide every hidden width");
      }
    }
  }

  bool operator==(const NetArchitecture&) const = default;
};

struct LayerLayout {
  Eigen::Index weight_offset;
  Eigen::Index bias_offset;
  Eigen::Index rows;  // fan-out
  Eigen::Index cols;  // fan-in
};

inline std::vector<LayerLayout> layout(const NetArchitecture& arch) {
  std::vector<LayerLayout> out;
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const Eigen::Index in = arch.widths[l];
    const Eigen::Index rows = arch.widths[l + 1];
    out.push_back({offset, offset + rows * in, rows, in});
    offset += rows * in + rows;
  }
  return out;
}

inline void check_params(const NetArchitecture& arch, const ParamVector& params) {
  arch.validate();
  detail::require(params.size() == arch.num_params(), "parameter vector does not match architecture");
  detail::require(params.allFinite(), "parameter vector has non-finite entries");
}

// ---------------------------------------------------------------------------
// GroupSort

/// Sorts each consecutive group of `group_size` entries ascending.
inline Eigen::VectorXd groupsort(const Eigen::VectorXd& v, Eigen::Index group_size) {
  detail::require(group_size >= 1 && v.size() % group_size == 0, "groupsort: group size must divide length");
  Matrix row = v.transpose();
  return ad::impl::groupsort_rows(row, group_size, nullptr).transpose();
}

inline void activate_inplace(const NetArchitecture& arch, Matrix& h) {
  if (arch.activation == Activation::kGroupSort) {
    h = ad::impl::groupsort_rows(h, arch.group_size, nullptr);
  } else {
    h = h.cwiseMax(0.0);
  }
}

// ---------------------------------------------------------------------------
// Forward pass

/// Affine-then-activation composition on a batch (one example per row).
inline Matrix forward(const NetArchitecture& arch, const ParamVector& params, const Matrix& batch) {
  check_params(arch, params);
  detail::require(batch.cols() == arch.input_dim(), "batch width does not match the input dimension");
  Matrix h = batch;
  const auto layers = layout(arch);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& ly = layers[l];
    Eigen::Map<const RowMajorMatrix> w(params.data() + ly.weight_offset, ly.rows, ly.cols);
    Eigen::Map<const Eigen::RowVectorXd> b(params.data() + ly.bias_offset, ly.rows);
    Matrix next = h * w.transpose();
    next.rowwise() += b;
    if (l + 1 < layers.size()) activate_inplace(arch, next);
    h = std::move(next);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Björck orthonormalization

inline constexpr int kPowerIterations = 20;

struct SpectralEstimate {
  double sigma = 0.0;
  Eigen::VectorXd u;  // left singular vector estimate
  Eigen::VectorXd v;  // right singular vector estimate
};

/// Power iteration on W^T W from a fixed start vector; deterministic.
inline SpectralEstimate power_iteration(const Matrix& w, int iterations = kPowerIterations) {
  SpectralEstimate est;
  est.v.resize(w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j) est.v(j) = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(j));
  est.v.normalize();
  est.u = Eigen::VectorXd::Zero(w.rows());
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd wv = w * est.v;
    const double norm = wv.norm();
    if (!(norm > 0.0)) return est;  // sigma stays 0
    est.u = wv / norm;
    Eigen::VectorXd wtu = w.transpose() * est.u;
    const double norm_t = wtu.norm();
    if (!(norm_t > 0.0)) return est;
    est.v = wtu / norm_t;
  }
  Eigen::VectorXd wv = w * est.v;
  est.sigma = wv.norm();
  if (est.sigma > 0.0) est.u = wv / est.sigma;
  return est;
}

/// A <- A (I + (I - A^T A) / 2), repeated. Expects a tall (or square) A.
inline Matrix bjorck_iterate(Matrix a, int iterations) {
  for (int k = 0; k < iterations; ++k) {
    const Matrix gram = a.transpose() * a;
    a = 1.5 * a - 0.5 * (a * gram);
  }
  return a;
}

/// Björck orthonormalization of W after dividing by a power-iteration
/// estimate of its spectral norm. Tall/square inputs get orthonormal columns,
/// wide inputs orthonormal rows. The all-zero matrix maps to itself.
inline Matrix bjorck(const Matrix& w, int iterations) {
  detail::require(iterations >= 0, "bjorck: iteration count must be non-negative");
  detail::require(w.allFinite(), "bjorck: non-finite weight entries");
  const bool wide = w.rows() < w.cols();
  const Matrix a = wide ? Matrix(w.transpose()) : w;
  const SpectralEstimate est = power_iteration(a);
  if (est.sigma == 0.0) {
    detail::require(a.isZero(0.0), "bjorck: spectral pre-scale failed on a non-zero matrix");
    return w;
  }
  if (!std::isfinite(est.sigma)) throw InvalidArgument("bjorck: spectral pre-scale is not finite");
  Matrix out = bjorck_iterate(a / est.sigma, iterations);
  return wide ? Matrix(out.transpose()) : out;
}

/// max |(A^T A - I)_{ij}| for tall A, or the row analogue for wide A.
inline double gram_error(const Matrix& a) {
  const Matrix gram = a.rows() >= a.cols() ? Matrix(a.transpose() * a) : Matrix(a * a.transpose());
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

/// Copy of `raw` with every weight matrix replaced by bjorck(W, iterations).
inline ParamVector project_weights(const NetArchitecture& arch, const ParamVector& raw, int iterations) {
  check_params(arch, raw);
  ParamVector out = raw;
  for (const auto& ly : layout(arch)) {
    Eigen::Map<const RowMajorMatrix> w(raw.data() + ly.weight_offset, ly.rows, ly.cols);
    Eigen::Map<RowMajorMatrix>(out.data() + ly.weight_offset, ly.rows, ly.cols) = bjorck(w, iterations);
  }
  return out;
}

inline Matrix critic_forward(const NetArchitecture& arch, const ParamVector& raw, const Matrix& batch,
                             int bjorck_iterations) {
  return forward(arch, project_weights(arch, raw, bjorck_iterations), batch);
}

// ---------------------------------------------------------------------------
// Differentiable versions

/// W / sigma(W) with sigma the power-iteration estimate; the backward pass
/// uses d sigma / dW = u v^T.
inline ad::Var spectral_normalize(ad::Var w) {
  ad::Tape& t = *w.tape();
  SpectralEstimate est = power_iteration(w.value());
  if (est.sigma == 0.0) {
    detail::require(w.value().isZero(0.0), "bjorck: spectral pre-scale failed on a non-zero matrix");
    return t.constant(w.value());
  }
  if (!std::isfinite(est.sigma)) throw InvalidArgument("bjorck: spectral pre-scale is not finite");
  const double sigma = est.sigma;
  return t.record(w.value() / sigma, {w}, [w, sigma, est = std::move(est)](ad::Tape& t, const ad::Matrix& g) {
    const double inner = (g.array() * w.value().array()).sum();
    t.accumulate(w.id(), g / sigma - (inner / (sigma * sigma)) * (est.u * est.v.transpose()));
  });
}

/// Unrolled Björck orthonormalization on the tape.
inline ad::Var bjorck(ad::Var w, int iterations) {
  detail::require(w.value().allFinite(), "bjorck: non-finite weight entries");
  const bool wide = w.rows() < w.cols();
  ad::Var a = spectral_normalize(wide ? ad::transpose(w) : w);
  for (int k = 0; k < iterations; ++k) {
    ad::Var gram = ad::matmul(ad::transpose(a), a);
    a = 1.5 * a - 0.5 * ad::matmul(a, gram);
  }
  return wide ? ad::transpose(a) : a;
}

/// Forward pass on the tape. With bjorck_iterations > 0 every weight matrix is
/// orthonormalized first (critic mode).
inline ad::Var forward(const NetArchitecture& arch, ad::Var params, ad::Var batch, int bjorck_iterations = 0) {
  arch.validate();
  detail::require(params.rows() == arch.num_params() && params.cols() == 1,
                  "parameter vector does not match architecture");
  detail::require(batch.cols() == arch.input_dim(), "batch width does not match the input dimension");
  const auto layers = layout(arch);
  ad::Var h = batch;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& ly = layers[l];
    ad::Var w = ad::slice(params, ly.weight_offset, ly.rows, ly.cols);
    if (bjorck_iterations > 0) w = bjorck(w, bjorck_iterations);
    ad::Var b = ad::slice(params, ly.bias_offset, 1, ly.rows);
    h = ad::add_rowwise(ad::matmul(h, ad::transpose(w)), b);
    if (l + 1 < layers.size()) {
      h = arch.activation == Activation::kGroupSort ? ad::groupsort(h, arch.group_size) : ad::relu(h);
    }
  }
  return h;
}

inline ad::Var critic_forward(const NetArchitecture& arch, ad::Var raw, ad::Var batch, int bjorck_iterations) {
  detail::require(bjorck_iterations >= 1, "critic_forward needs at least one Björck iteration");
  return forward(arch, raw, batch, bjorck_iterations);
}

/// Value and gradient of a scalar loss built on a tape from the parameters.
/// `loss(tape, params_var)` must return a 1x1 node.
template <class Loss>
std::pair<double, ParamVector> value_and_gradient(const NetArchitecture& arch, const ParamVector& params,
                                                  Loss&& loss) {
  check_params(arch, params);
  ad::Tape tape;
  ad::Var p = tape.variable(params);
  ad::Var l = loss(tape, p);
  const double value = l.scalar();
  if (!std::isfinite(value)) throw DivergenceError("non-finite loss");
  tape.backward(l);
  return {value, ParamVector(p.grad())};
}

template <class Loss>
ParamVector gradient(const NetArchitecture& arch, const ParamVector& params, Loss&& loss) {
  return value_and_gradient(arch, params, std::forward<Loss>(loss)).second;
}

// ---------------------------------------------------------------------------
// Initialization

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
template <class Engine>
ParamVector init_uniform(const NetArchitecture& arch, Engine& engine) {
  arch.validate();
  ParamVector p(arch.num_params());
  for (const auto& ly : layout(arch)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(ly.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < ly.rows * ly.cols + ly.rows; ++i) p(ly.weight_offset + i) = dist(engine);
  }
  return p;
}

/// Orthogonal weights (QR of a Gaussian matrix), zero biases.
template <class Engine>
ParamVector init_orthogonal(const NetArchitecture& arch, Engine& engine) {
  arch.validate();
  ParamVector p = ParamVector::Zero(arch.num_params());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& ly : layout(arch)) {
    const bool wide = ly.rows < ly.cols;
    const Eigen::Index tall = wide ? ly.cols : ly.rows;
    const Eigen::Index narrow = wide ? ly.rows : ly.cols;
    Matrix g(tall, narrow);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(engine);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(tall, narrow);
    // Sign fix so the result is Haar-distributed.
    const Matrix r = qr.matrixQR().topRows(narrow).template triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < narrow; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    Eigen::Map<RowMajorMatrix> w(p.data() + ly.weight_offset, ly.rows, ly.cols);
    if (wide) {
      w = q.transpose();
    } else {
      w = q;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Serialization
//
// Parameter CSV: header `value`, one entry per line.
// Architecture descriptor (sidecar):
//   widths=2,64,64,1
//   activation=groupsort      # or relu
//   group_size=2

inline void write_params_csv(std::ostream& os, const ParamVector& p) {
  os << "value\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < p.size(); ++i) os << p(i) << '\n';
}

inline ParamVector read_params_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("value", 0) != 0) {
    throw ConfigError("parameter CSV must start with header 'value'");
  }
  std::vector<double> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      values.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw ConfigError("non-numeric entry in parameter CSV: " + line);
    }
  }
  return Eigen::Map<const ParamVector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline std::string format_widths(const std::vector<Eigen::Index>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(widths[i]);
  }
  return out;
}

inline std::vector<Eigen::Index> parse_widths(const std::string& text) {
  std::vector<Eigen::Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("widths: expected integers, got '" + text + "'");
    }
    if (used != item.size() || v <= 0) throw ConfigError("widths: expected positive integers, got '" + text + "'");
    out.push_back(static_cast<Eigen::Index>(v));
  }
  if (out.size() < 2) throw ConfigError("widths: need at least two entries");
  return out;
}

inline std::string format_architecture(const NetArchitecture& arch) {
  std::ostringstream os;
  os << "widths=" << format_widths(arch.widths) << '\n'
     << "activation=" << (arch.activation == Activation::kGroupSort ? "groupsort" : "relu") << '\n'
     << "group_size=" << arch.group_size << '\n';
  return os.str();
}

inline NetArchitecture parse_architecture(std::istream& is) {
  NetArchitecture arch;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("architecture line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "widths") {
      arch.widths = parse_widths(value);
    } else if (key == "activation") {
      if (value == "groupsort") {
        arch.activation = Activation::kGroupSort;
      } else if (value == "relu") {
        arch.activation = Activation::kReLU;
      } else {
        throw ConfigError("activation must be groupsort or relu");
      }
    } else if (key == "group_size") {
      arch.group_size = parse_widths(value + ",1").front();
    } else {
      throw ConfigError("unknown architecture key '" + key + "'");
    }
  }
  try {
    arch.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid architecture: ") + e.what());
  }
  return arch;
}

}  // namespace pacgen::lipnet

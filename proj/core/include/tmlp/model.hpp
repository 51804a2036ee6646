#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmlp/numerics.hpp"

namespace tmlp::model {

using numerics::index;
using numerics::Matrix;
using numerics::Vector;

enum class Architecture : std::uint8_t {
  tmlp = 0,
  tmlp_no_residual = 1,
  tmlp_no_multiplicative = 2,
  plain_mlp = 3,
  residual_mlp = 4,
};

const char* architecture_name(Architecture a);
Architecture architecture_from_name(const std::string& name);
Architecture architecture_from_id(std::uint8_t id);

/// True when the architecture attaches an output tail to every hidden layer.
inline bool has_per_layer_tails(Architecture a) {
  return a == Architecture::tmlp || a == Architecture::tmlp_no_residual ||
         a == Architecture::tmlp_no_multiplicative;
}

/// True when tails at layers >= 2 are products of two affine maps.
inline bool has_multiplicative_tails(Architecture a) {
  return a == Architecture::tmlp || a == Architecture::tmlp_no_residual;
}

struct ModelConfig {
  index input_dim = 2;
  index output_dim = 1;
  index hidden_width = 256;
  index num_hidden_layers = 5;
  double omega0 = 30.0;
  Architecture architecture = Architecture::tmlp;
  std::uint64_t seed = 0;

  void validate() const;
  /// Number of level-of-detail outputs the model exposes.
  index lod_count() const {
    return has_per_layer_tails(architecture) ? num_hidden_layers : 1;
  }
  bool operator==(const ModelConfig&) const = default;
};

/// Closed-form parameter count for a config.
index param_count(const ModelConfig& config);

/// Output branch attached to one hidden layer. Affine tails use w0/b0 only;
/// multiplicative tails hold both factors.
template <class T>
struct Tail {
  Matrix<T> w0;
  Vector<T> b0;
  Matrix<T> w1;
  Vector<T> b1;
  bool multiplicative = false;
};

template <class T>
struct ModelParams {
  ModelConfig config;
  std::vector<Matrix<T>> hidden_w;  // layer i: width x fan_in
  std::vector<Vector<T>> hidden_b;
  std::vector<Tail<T>> tails;  // one per layer, or a single final head

  /// Tail attached to 1-based layer i; valid only where the architecture
  /// defines one (every layer for tailed variants, layer k otherwise).
  const Tail<T>& tail_at(index layer_1based) const;
  Tail<T>& tail_at(index layer_1based);
};

/// Frequency-scaled uniform init for the sine layers and tails,
/// deterministic in config.seed.
template <class T>
ModelParams<T> init_sine(const ModelConfig& config);

/// Per-sample cumulative outputs. t[i] and y[i] are batch x output_dim;
/// y[i] is stored as computed (y[i] = y[i-1] + t[i] holds bit-exactly over
/// the stored buffers).
template <class T>
struct TailOutputs {
  std::vector<Matrix<T>> t;
  std::vector<Matrix<T>> y;
};

template <class T>
struct ForwardTrace {
  Matrix<T> x;                     // batch x input_dim
  std::vector<Matrix<T>> z;        // pre-activations, batch x width
  std::vector<Matrix<T>> h;        // hidden states
  std::vector<Matrix<T>> cos_z;    // cos at the applied frequency, for backward
  std::vector<Matrix<T>> tail_u;   // first factor (multiplicative tails)
  std::vector<Matrix<T>> tail_v;   // second factor
};

/// Forward pass to layer `upto` (default all), without trace storage.
template <class T>
TailOutputs<T> forward(const ModelParams<T>& params, const Matrix<T>& x_batch,
                       index upto = 0);

/// Forward pass retaining everything backward() needs.
template <class T>
TailOutputs<T> forward_traced(const ModelParams<T>& params, const Matrix<T>& x_batch,
                              ForwardTrace<T>& trace);

/// Hidden state h_j only, for frozen-trunk probing.
template <class T>
Matrix<T> hidden_at(const ModelParams<T>& params, const Matrix<T>& x_batch,
                    index layer_1based);

/// Gradient of sum_i <output_grads[i], y_i> with respect to every parameter,
/// written into `grad_flat` in flatten() layout.
template <class T>
void backward(const ModelParams<T>& params, const ForwardTrace<T>& trace,
              const TailOutputs<T>& outputs,
              const std::vector<Matrix<T>>& output_grads, Vector<T>& grad_flat);

/// Keeps hidden layers 1..j and their tails.
template <class T>
ModelParams<T> truncate(const ModelParams<T>& params, index j);

/// Rank-1 quadratic form equivalent to multiplicative tail i at one output
/// coordinate: value = h^T Q h + u^T h + s with Q = a b^T.
template <class T>
struct TailQuadratic {
  Matrix<T> Q;
  Vector<T> u;
  T s;
  T value;
};

template <class T>
TailQuadratic<T> tail_quadratic_oracle(const ModelParams<T>& params, index layer_1based,
                                       index out_coord, const Vector<T>& h);

/// Flat parameter layout: for each layer i, [W_i, b_i, tail params...] with
/// tail params ordered w0, b0, (w1, b1). Matches the stream chunk payloads.
template <class T>
Vector<T> flatten(const ModelParams<T>& params);

template <class T>
ModelParams<T> unflatten(const ModelConfig& config, const Vector<T>& flat);

/// Describes one parameter tensor inside the flat layout.
struct ParamSegment {
  enum class Kind { hidden_w, hidden_b, tail_w0, tail_b0, tail_w1, tail_b1 };
  index layer = 0;  // 1-based
  Kind kind = Kind::hidden_w;
  index offset = 0;
  index rows = 0;
  index cols = 0;  // 1 for bias vectors
  index count() const { return rows * cols; }
};

std::vector<ParamSegment> param_layout(const ModelConfig& config);

/// Converts parameter precision (oracle paths run models in binary64).
ModelParams<double> widen(const ModelParams<float>& params);
ModelParams<float> narrow(const ModelParams<double>& params);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace tmlp::model

#include "tmlp/model.hpp"

#include <cmath>
#include <cstring>
#include <map>

#include "tmlp/rng.hpp"

namespace tmlp::model {

namespace {

constexpr const char* kArchNames[] = {"tmlp", "tmlp_no_residual",
                                      "tmlp_no_multiplicative", "plain_mlp",
                                      "residual_mlp"};

bool tail_is_multiplicative(Architecture a, index layer_1based) {
  return has_multiplicative_tails(a) && layer_1based >= 2;
}

/// Z = H W^T + b, sample-major.
template <class T>
Matrix<T> linear(const Matrix<T>& H, const Matrix<T>& W, const Vector<T>& b) {
  if (H.cols != W.cols || W.rows != b.size())
    throw ShapeError("linear: H " + numerics::shape_str(H.rows, H.cols) + " vs W " +
                     numerics::shape_str(W.rows, W.cols));
  Matrix<T> Z(H.rows, W.rows);
  for (index r = 0; r < Z.rows; ++r)
    std::memcpy(Z.data.data() + r * Z.cols, b.data(), Z.cols * sizeof(T));
  numerics::gemm(false, true, H.rows, W.rows, H.cols, T(1), H.data.data(), H.cols,
                 W.data.data(), W.cols, T(1), Z.data.data(), Z.cols);
  return Z;
}

/// gw += DZ^T H, gb += column sums of DZ.
template <class T>
void accumulate_linear_grads(const Matrix<T>& DZ, const Matrix<T>& H, T* gw, T* gb) {
  numerics::gemm(true, false, DZ.cols, H.cols, DZ.rows, T(1), DZ.data.data(), DZ.cols,
                 H.data.data(), H.cols, T(1), gw, H.cols);
  for (index r = 0; r < DZ.rows; ++r)
    for (index c = 0; c < DZ.cols; ++c) gb[c] += DZ.at(r, c);
}

/// DH += DZ W.
template <class T>
void accumulate_input_grad(const Matrix<T>& DZ, const Matrix<T>& W, Matrix<T>& DH) {
  numerics::gemm(false, false, DZ.rows, W.cols, DZ.cols, T(1), DZ.data.data(), DZ.cols,
                 W.data.data(), W.cols, T(1), DH.data.data(), DH.cols);
}

template <class T>
Matrix<T> hadamard_mat(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows, a.cols);
  for (index i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

}  // namespace

const char* architecture_name(Architecture a) {
  return kArchNames[static_cast<std::uint8_t>(a)];
}

Architecture architecture_from_name(const std::string& name) {
  for (std::uint8_t i = 0; i < 5; ++i)
    if (name == kArchNames[i]) return static_cast<Architecture>(i);
  throw ConfigError("unknown architecture '" + name + "'");
}

Architecture architecture_from_id(std::uint8_t id) {
  if (id >= 5) throw FormatError("unknown architecture id " + std::to_string(id));
  return static_cast<Architecture>(id);
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
  if (output_dim < 1) throw ConfigError("model.output_dim must be >= 1");
  if (hidden_width < 1) throw ConfigError("model.hidden_width must be >= 1");
  if (num_hidden_layers < 1) throw ConfigError("model.num_hidden_layers must be >= 1");
  if (!(omega0 > 0)) throw ConfigError("model.omega0 must be > 0");
}

std::vector<ParamSegment> param_layout(const ModelConfig& config) {
  config.validate();
  const index k = config.num_hidden_layers;
  const index w = config.hidden_width;
  const index d = config.output_dim;
  std::vector<ParamSegment> segs;
  index off = 0;
  auto push = [&](index layer, ParamSegment::Kind kind, index rows, index cols) {
    segs.push_back({layer, kind, off, rows, cols});
    off += rows * cols;
  };
  for (index i = 1; i <= k; ++i) {
    const index fan_in = (i == 1) ? config.input_dim : w;
    push(i, ParamSegment::Kind::hidden_w, w, fan_in);
    push(i, ParamSegment::Kind::hidden_b, w, 1);
    const bool tailed = has_per_layer_tails(config.architecture) ? true : (i == k);
    if (!tailed) continue;
    push(i, ParamSegment::Kind::tail_w0, d, w);
    push(i, ParamSegment::Kind::tail_b0, d, 1);
    if (tail_is_multiplicative(config.architecture, i)) {
      push(i, ParamSegment::Kind::tail_w1, d, w);
      push(i, ParamSegment::Kind::tail_b1, d, 1);
    }
  }
  return segs;
}

index param_count(const ModelConfig& config) {
  index n = 0;
  for (const auto& seg : param_layout(config)) n += seg.count();
  return n;
}

template <class T>
const Tail<T>& ModelParams<T>::tail_at(index layer_1based) const {
  if (has_per_layer_tails(config.architecture)) return tails.at(layer_1based - 1);
  if (layer_1based != config.num_hidden_layers)
    throw ShapeError("architecture has no tail at layer " + std::to_string(layer_1based));
  return tails.at(0);
}

template <class T>
Tail<T>& ModelParams<T>::tail_at(index layer_1based) {
  return const_cast<Tail<T>&>(std::as_const(*this).tail_at(layer_1based));
}

template <class T>
ModelParams<T> unflatten(const ModelConfig& config, const Vector<T>& flat) {
  if (flat.size() != param_count(config))
    throw ShapeError("unflatten: expected " + std::to_string(param_count(config)) +
                     " params, got " + std::to_string(flat.size()));
  ModelParams<T> p;
  p.config = config;
  const index k = config.num_hidden_layers;
  p.hidden_w.resize(k);
  p.hidden_b.resize(k);
  p.tails.resize(has_per_layer_tails(config.architecture) ? k : 1);
  for (const auto& seg : param_layout(config)) {
    const T* src = flat.data() + seg.offset;
    const index tail_slot = has_per_layer_tails(config.architecture) ? seg.layer - 1 : 0;
    Vector<T> vals(src, src + seg.count());
    switch (seg.kind) {
      case ParamSegment::Kind::hidden_w:
        p.hidden_w[seg.layer - 1] = Matrix<T>(seg.rows, seg.cols, std::move(vals));
        break;
      case ParamSegment::Kind::hidden_b:
        p.hidden_b[seg.layer - 1] = std::move(vals);
        break;
      case ParamSegment::Kind::tail_w0:
        p.tails[tail_slot].w0 = Matrix<T>(seg.rows, seg.cols, std::move(vals));
        p.tails[tail_slot].multiplicative =
            tail_is_multiplicative(config.architecture, seg.layer);
        break;
      case ParamSegment::Kind::tail_b0:
        p.tails[tail_slot].b0 = std::move(vals);
        break;
      case ParamSegment::Kind::tail_w1:
        p.tails[tail_slot].w1 = Matrix<T>(seg.rows, seg.cols, std::move(vals));
        break;
      case ParamSegment::Kind::tail_b1:
        p.tails[tail_slot].b1 = std::move(vals);
        break;
    }
  }
  return p;
}

template <class T>
Vector<T> flatten(const ModelParams<T>& params) {
  const auto& config = params.config;
  Vector<T> flat(param_count(config));
  for (const auto& seg : param_layout(config)) {
    T* dst = flat.data() + seg.offset;
    const index tail_slot = has_per_layer_tails(config.architecture) ? seg.layer - 1 : 0;
    const T* src = nullptr;
    switch (seg.kind) {
      case ParamSegment::Kind::hidden_w: src = params.hidden_w[seg.layer - 1].data.data(); break;
      case ParamSegment::Kind::hidden_b: src = params.hidden_b[seg.layer - 1].data(); break;
      case ParamSegment::Kind::tail_w0: src = params.tails[tail_slot].w0.data.data(); break;
      case ParamSegment::Kind::tail_b0: src = params.tails[tail_slot].b0.data(); break;
      case ParamSegment::Kind::tail_w1: src = params.tails[tail_slot].w1.data.data(); break;
      case ParamSegment::Kind::tail_b1: src = params.tails[tail_slot].b1.data(); break;
    }
    std::memcpy(dst, src, seg.count() * sizeof(T));
  }
  return flat;
}

template <class T>
ModelParams<T> init_sine(const ModelConfig& config) {
  config.validate();
  Rng rng = Rng::derive(config.seed, 0);
  Vector<T> flat(param_count(config));
  const double tail_bound = std::sqrt(6.0 / double(config.hidden_width)) / config.omega0;
  for (const auto& seg : param_layout(config)) {
    double bound;
    if (seg.kind == ParamSegment::Kind::hidden_w ||
        seg.kind == ParamSegment::Kind::hidden_b) {
      bound = (seg.layer == 1)
                  ? 1.0 / double(config.input_dim)
                  : std::sqrt(6.0 / double(config.hidden_width)) / config.omega0;
    } else {
      bound = tail_bound;
    }
    T* dst = flat.data() + seg.offset;
    for (index i = 0; i < seg.count(); ++i) dst[i] = T(rng.uniform(-bound, bound));
  }
  return unflatten(config, flat);
}

template <class T>
static TailOutputs<T> run_forward(const ModelParams<T>& params, const Matrix<T>& x,
                                  index upto, ForwardTrace<T>* trace) {
  const auto& config = params.config;
  const index k = config.num_hidden_layers;
  if (upto == 0) upto = k;
  if (upto > k) throw ShapeError("forward: layer bound " + std::to_string(upto) +
                                 " exceeds depth " + std::to_string(k));
  if (x.cols != config.input_dim)
    throw ShapeError("forward: input dim " + std::to_string(x.cols) + " != " +
                     std::to_string(config.input_dim));
  if (!has_per_layer_tails(config.architecture) && upto != k)
    throw ShapeError("forward: architecture has outputs only at depth " +
                     std::to_string(k));
  numerics::ensure_finite(x.data, "forward input");

  const bool residual_skip = config.architecture == Architecture::residual_mlp;
  TailOutputs<T> out;
  if (trace) trace->x = x;
  Matrix<T> h = x;
  Matrix<T> y;  // running cumulative output
  for (index i = 1; i <= upto; ++i) {
    Matrix<T> z = linear(h, params.hidden_w[i - 1], params.hidden_b[i - 1]);
    const T scale = (i == 1) ? T(config.omega0) : T(1);
    Matrix<T> s(z.rows, z.cols), c(z.rows, z.cols);
    numerics::sincos_batch(z.data.data(), s.data.data(), c.data.data(), z.size(), scale);
    Matrix<T> h_next;
    if (residual_skip && i >= 2) {
      h_next = h;
      for (index j = 0; j < h_next.size(); ++j) h_next.data[j] += s.data[j];
    } else {
      h_next = std::move(s);
    }
    if (trace) {
      trace->z.push_back(std::move(z));
      trace->cos_z.push_back(std::move(c));
      trace->h.push_back(h_next);
    }
    h = std::move(h_next);

    if (has_per_layer_tails(config.architecture)) {
      const Tail<T>& tail = params.tails[i - 1];
      Matrix<T> t;
      if (tail.multiplicative) {
        Matrix<T> u = linear(h, tail.w0, tail.b0);
        Matrix<T> v = linear(h, tail.w1, tail.b1);
        t = hadamard_mat(u, v);
        if (trace) {
          trace->tail_u.push_back(std::move(u));
          trace->tail_v.push_back(std::move(v));
        }
      } else {
        t = linear(h, tail.w0, tail.b0);
        if (trace) {
          trace->tail_u.push_back(Matrix<T>());
          trace->tail_v.push_back(Matrix<T>());
        }
      }
      if (config.architecture == Architecture::tmlp_no_residual || i == 1) {
        y = t;
      } else {
        // y_i = y_{i-1} + t_i, stored once so the identity holds bit-exactly
        Matrix<T> y_next(y.rows, y.cols);
        for (index j = 0; j < y.size(); ++j) y_next.data[j] = y.data[j] + t.data[j];
        y = std::move(y_next);
      }
      out.t.push_back(std::move(t));
      out.y.push_back(y);
    }
  }
  if (!has_per_layer_tails(config.architecture)) {
    const Tail<T>& head = params.tails[0];
    Matrix<T> t = linear(h, head.w0, head.b0);
    out.t.push_back(t);
    out.y.push_back(std::move(t));
  }
  numerics::ensure_finite(out.y.back().data, "forward output");
  return out;
}

template <class T>
TailOutputs<T> forward(const ModelParams<T>& params, const Matrix<T>& x_batch,
                       index upto) {
  return run_forward<T>(params, x_batch, upto, nullptr);
}

template <class T>
TailOutputs<T> forward_traced(const ModelParams<T>& params, const Matrix<T>& x_batch,
                              ForwardTrace<T>& trace) {
  trace = ForwardTrace<T>{};
  return run_forward<T>(params, x_batch, 0, &trace);
}

template <class T>
Matrix<T> hidden_at(const ModelParams<T>& params, const Matrix<T>& x_batch,
                    index layer_1based) {
  const auto& config = params.config;
  if (layer_1based < 1 || layer_1based > config.num_hidden_layers)
    throw ShapeError("hidden_at: layer " + std::to_string(layer_1based) +
                     " outside 1.." + std::to_string(config.num_hidden_layers));
  if (x_batch.cols != config.input_dim)
    throw ShapeError("hidden_at: input dim " + std::to_string(x_batch.cols));
  const bool residual_skip = config.architecture == Architecture::residual_mlp;
  Matrix<T> h = x_batch;
  for (index i = 1; i <= layer_1based; ++i) {
    Matrix<T> z = linear(h, params.hidden_w[i - 1], params.hidden_b[i - 1]);
    const T scale = (i == 1) ? T(config.omega0) : T(1);
    Matrix<T> s(z.rows, z.cols), c(z.rows, z.cols);
    numerics::sincos_batch(z.data.data(), s.data.data(), c.data.data(), z.size(), scale);
    if (residual_skip && i >= 2) {
      for (index j = 0; j < h.size(); ++j) h.data[j] += s.data[j];
    } else {
      h = std::move(s);
    }
  }
  return h;
}

template <class T>
void backward(const ModelParams<T>& params, const ForwardTrace<T>& trace,
              const TailOutputs<T>& /*outputs*/,
              const std::vector<Matrix<T>>& output_grads, Vector<T>& grad_flat) {
  const auto& config = params.config;
  const index k = config.num_hidden_layers;
  const index batch = trace.x.rows;
  if (trace.h.size() != k)
    throw ShapeError("backward: trace depth " + std::to_string(trace.h.size()) +
                     " != " + std::to_string(k));
  if (output_grads.size() != config.lod_count())
    throw ShapeError("backward: expected " + std::to_string(config.lod_count()) +
                     " output gradients, got " + std::to_string(output_grads.size()));
  for (const auto& g : output_grads)
    if (g.rows != batch || g.cols != config.output_dim)
      throw ShapeError("backward: output gradient shape " +
                       numerics::shape_str(g.rows, g.cols));

  grad_flat.assign(param_count(config), T(0));
  std::map<std::pair<index, int>, index> seg_off;
  for (const auto& seg : param_layout(config))
    seg_off[{seg.layer, int(seg.kind)}] = seg.offset;
  auto gptr = [&](index layer, ParamSegment::Kind kind) {
    return grad_flat.data() + seg_off.at({layer, int(kind)});
  };

  const bool tailed = has_per_layer_tails(config.architecture);
  const bool residual_skip = config.architecture == Architecture::residual_mlp;
  const bool cumulative = config.architecture != Architecture::tmlp_no_residual;

  Matrix<T> suffix(batch, config.output_dim);  // sum of grads of y_j for j >= i
  Matrix<T> dh_next;                           // dL/dh_{i+1}
  Matrix<T> dz_next;                           // dL/dz_{i+1}
  for (index i = k; i >= 1; --i) {
    Matrix<T> dh(batch, config.hidden_width);

    // tail contribution
    const bool has_tail = tailed || i == k;
    if (has_tail) {
      Matrix<T> p;  // dL/dt_i
      if (tailed) {
        const Matrix<T>& g = output_grads[i - 1];
        if (cumulative) {
          for (index j = 0; j < suffix.size(); ++j) suffix.data[j] += g.data[j];
          p = suffix;
        } else {
          p = g;
        }
      } else {
        p = output_grads[0];
      }
      const Tail<T>& tail = params.tail_at(i);
      const index slot = tailed ? i - 1 : 0;
      if (tail.multiplicative) {
        Matrix<T> du = hadamard_mat(p, trace.tail_v[slot]);
        Matrix<T> dv = hadamard_mat(p, trace.tail_u[slot]);
        accumulate_linear_grads(du, trace.h[i - 1], gptr(i, ParamSegment::Kind::tail_w0),
                                gptr(i, ParamSegment::Kind::tail_b0));
        accumulate_linear_grads(dv, trace.h[i - 1], gptr(i, ParamSegment::Kind::tail_w1),
                                gptr(i, ParamSegment::Kind::tail_b1));
        accumulate_input_grad(du, tail.w0, dh);
        accumulate_input_grad(dv, tail.w1, dh);
      } else {
        accumulate_linear_grads(p, trace.h[i - 1], gptr(i, ParamSegment::Kind::tail_w0),
                                gptr(i, ParamSegment::Kind::tail_b0));
        accumulate_input_grad(p, tail.w0, dh);
      }
    }

    // chain contribution from layer i+1
    if (i < k) {
      accumulate_input_grad(dz_next, params.hidden_w[i], dh);
      if (residual_skip)
        for (index j = 0; j < dh.size(); ++j) dh.data[j] += dh_next.data[j];
    }

    // through the activation: dz = dh * scale * cos(scale z)
    const T scale = (i == 1) ? T(config.omega0) : T(1);
    Matrix<T> dz(batch, config.hidden_width);
    const Matrix<T>& cz = trace.cos_z[i - 1];
    for (index j = 0; j < dz.size(); ++j) dz.data[j] = dh.data[j] * scale * cz.data[j];

    const Matrix<T>& h_prev = (i == 1) ? trace.x : trace.h[i - 2];
    accumulate_linear_grads(dz, h_prev, gptr(i, ParamSegment::Kind::hidden_w),
                            gptr(i, ParamSegment::Kind::hidden_b));
    dz_next = std::move(dz);
    dh_next = std::move(dh);
  }
  numerics::ensure_finite(grad_flat, "backward gradients");
}

template <class T>
ModelParams<T> truncate(const ModelParams<T>& params, index j) {
  const auto& config = params.config;
  const index k = config.num_hidden_layers;
  if (j < 1 || j > k)
    throw ShapeError("truncate: level " + std::to_string(j) + " outside 1.." +
                     std::to_string(k));
  if (!has_per_layer_tails(config.architecture) && j != k)
    throw ShapeError("truncate: architecture has no tail at layer " + std::to_string(j));
  ModelParams<T> out;
  out.config = config;
  out.config.num_hidden_layers = j;
  out.hidden_w.assign(params.hidden_w.begin(), params.hidden_w.begin() + j);
  out.hidden_b.assign(params.hidden_b.begin(), params.hidden_b.begin() + j);
  out.tails.assign(params.tails.begin(),
                   params.tails.begin() + (has_per_layer_tails(config.architecture) ? j : 1));
  return out;
}

template <class T>
TailQuadratic<T> tail_quadratic_oracle(const ModelParams<T>& params, index layer_1based,
                                       index out_coord, const Vector<T>& h) {
  const Tail<T>& tail = params.tail_at(layer_1based);
  if (!tail.multiplicative)
    throw ShapeError("tail_quadratic_oracle: tail at layer " +
                     std::to_string(layer_1based) + " is affine");
  const index w = tail.w0.cols;
  if (h.size() != w) throw ShapeError("tail_quadratic_oracle: hidden size mismatch");
  const T* a = tail.w0.data.data() + out_coord * w;
  const T* b = tail.w1.data.data() + out_coord * w;
  const T c = tail.b0[out_coord];
  const T d = tail.b1[out_coord];

  TailQuadratic<T> q;
  q.Q = Matrix<T>(w, w);
  for (index r = 0; r < w; ++r)
    for (index s = 0; s < w; ++s) q.Q.at(r, s) = a[r] * b[s];
  q.u.resize(w);
  for (index r = 0; r < w; ++r) q.u[r] = d * a[r] + c * b[r];
  q.s = c * d;
  T acc = q.s;
  for (index r = 0; r < w; ++r) {
    T row = 0;
    for (index s = 0; s < w; ++s) row += q.Q.at(r, s) * h[s];
    acc += h[r] * row + q.u[r] * h[r];
  }
  q.value = acc;
  return q;
}

ModelParams<double> widen(const ModelParams<float>& params) {
  Vector<float> flat = flatten(params);
  Vector<double> wide(flat.begin(), flat.end());
  return unflatten<double>(params.config, wide);
}

ModelParams<float> narrow(const ModelParams<double>& params) {
  Vector<double> flat = flatten(params);
  Vector<float> slim(flat.size());
  for (index i = 0; i < flat.size(); ++i) slim[i] = float(flat[i]);
  return unflatten<float>(params.config, slim);
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_sine<float>(const ModelConfig&);
template ModelParams<double> init_sine<double>(const ModelConfig&);
template TailOutputs<float> forward<float>(const ModelParams<float>&, const Matrix<float>&, index);
template TailOutputs<double> forward<double>(const ModelParams<double>&, const Matrix<double>&, index);
template TailOutputs<float> forward_traced<float>(const ModelParams<float>&, const Matrix<float>&, ForwardTrace<float>&);
template TailOutputs<double> forward_traced<double>(const ModelParams<double>&, const Matrix<double>&, ForwardTrace<double>&);
template Matrix<float> hidden_at<float>(const ModelParams<float>&, const Matrix<float>&, index);
template Matrix<double> hidden_at<double>(const ModelParams<double>&, const Matrix<double>&, index);
template void backward<float>(const ModelParams<float>&, const ForwardTrace<float>&, const TailOutputs<float>&, const std::vector<Matrix<float>>&, Vector<float>&);
template void backward<double>(const ModelParams<double>&, const ForwardTrace<double>&, const TailOutputs<double>&, const std::vector<Matrix<double>>&, Vector<double>&);
template ModelParams<float> truncate<float>(const ModelParams<float>&, index);
template ModelParams<double> truncate<double>(const ModelParams<double>&, index);
template TailQuadratic<float> tail_quadratic_oracle<float>(const ModelParams<float>&, index, index, const Vector<float>&);
template TailQuadratic<double> tail_quadratic_oracle<double>(const ModelParams<double>&, index, index, const Vector<double>&);
template Vector<float> flatten<float>(const ModelParams<float>&);
template Vector<double> flatten<double>(const ModelParams<double>&);
template ModelParams<float> unflatten<float>(const ModelConfig&, const Vector<float>&);
template ModelParams<double> unflatten<double>(const ModelConfig&, const Vector<double>&);

}  // namespace tmlp::model

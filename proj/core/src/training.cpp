#include "tmlp/training.hpp"

#include <cmath>
#include <ostream>

#include "tmlp/rng.hpp"

namespace tmlp::training {

namespace {

// rng stream ids; model init uses stream 0
constexpr std::uint64_t kFreshHeadStream = 16;

template <class T>
double tail_loss(const Matrix<T>& y, const Matrix<T>& gt, LossKind kind) {
  double acc = 0;
  for (index i = 0; i < y.size(); ++i) {
    const double d = double(y.data[i]) - double(gt.data[i]);
    acc += (kind == LossKind::l1_sdf) ? std::fabs(d) : d * d;
  }
  return acc / double(y.size());
}

template <class T>
Matrix<T> tail_loss_grad(const Matrix<T>& y, const Matrix<T>& gt, LossKind kind,
                         double lambda) {
  Matrix<T> g(y.rows, y.cols);
  const double inv = lambda / double(y.size());
  for (index i = 0; i < y.size(); ++i) {
    const double d = double(y.data[i]) - double(gt.data[i]);
    if (kind == LossKind::l1_sdf)
      g.data[i] = T(inv * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)));
    else
      g.data[i] = T(inv * 2.0 * d);
  }
  return g;
}

}  // namespace

const char* loss_kind_name(LossKind kind) {
  return kind == LossKind::l1_sdf ? "l1_sdf" : "l2_image";
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "l1_sdf") return LossKind::l1_sdf;
  if (name == "l2_image") return LossKind::l2_image;
  throw ConfigError("unknown loss kind '" + name + "'");
}

void LossWeights::validate(index lod_count) const {
  if (lambda.size() != lod_count)
    throw ConfigError("loss weights: got " + std::to_string(lambda.size()) +
                      " entries for " + std::to_string(lod_count) + " outputs");
  bool any = false;
  for (double l : lambda) {
    if (l < 0) throw ConfigError("loss weights must be >= 0");
    any = any || l > 0;
  }
  if (!any) throw ConfigError("loss weights: at least one must be > 0");
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(initial_lr > 0)) throw ConfigError("train.lr must be > 0");
  long prev = -1;
  for (const auto& p : schedule) {
    if (p.step <= prev) throw ConfigError("train.schedule steps must be increasing");
    if (!(p.multiplier > 0) || p.multiplier > 1)
      throw ConfigError("train.schedule multipliers must be in (0,1]");
    prev = p.step;
  }
}

void TrainHistory::write_csv(std::ostream& out) const {
  if (rows.empty()) return;
  out << "step,lr";
  for (index i = 1; i <= rows.front().per_tail.size(); ++i) out << ",loss_" << i;
  out << ",total\n";
  char buf[32];
  for (const auto& row : rows) {
    out << row.step << ',';
    std::snprintf(buf, sizeof buf, "%.9g", row.lr);
    out << buf;
    for (double v : row.per_tail) {
      std::snprintf(buf, sizeof buf, "%.9g", v);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.9g", row.total);
    out << ',' << buf << '\n';
  }
}

template <class T>
LossResult<T> total_loss(const TailOutputs<T>& tails, const Matrix<T>& gt,
                         const LossWeights& weights, LossKind kind) {
  const index n = tails.y.size();
  weights.validate(n);
  LossResult<T> result;
  result.per_tail.resize(n);
  result.grads.reserve(n);
  for (index i = 0; i < n; ++i) {
    const Matrix<T>& y = tails.y[i];
    if (y.rows != gt.rows || y.cols != gt.cols)
      throw ShapeError("total_loss: output " + numerics::shape_str(y.rows, y.cols) +
                       " vs target " + numerics::shape_str(gt.rows, gt.cols));
    result.per_tail[i] = tail_loss(y, gt, kind);
    result.total += weights.lambda[i] * result.per_tail[i];
    result.grads.push_back(tail_loss_grad(y, gt, kind, weights.lambda[i]));
  }
  return result;
}

double lr_at(const TrainConfig& config, long step) {
  double lr = config.initial_lr;
  for (const auto& p : config.schedule)
    if (p.step <= step) lr *= p.multiplier;
  return lr;
}

template <class T>
TrainResult<T> train_from(const TrainConfig& config, const ModelParams<T>& start,
                          BatchSource<T>& sampler) {
  config.validate();
  const ModelConfig& mc = start.config;
  config.weights.validate(mc.lod_count());
  if (sampler.input_dim() != mc.input_dim || sampler.output_dim() != mc.output_dim)
    throw ShapeError("train: sampler dims (" + std::to_string(sampler.input_dim()) +
                     "," + std::to_string(sampler.output_dim()) + ") vs model (" +
                     std::to_string(mc.input_dim) + "," + std::to_string(mc.output_dim) +
                     ")");

  Vector<T> flat = model::flatten(start);
  numerics::AdamState<T> state(flat.size());
  TrainResult<T> result;
  result.history.rows.reserve(config.iterations);

  Matrix<T> coords, targets;
  model::ForwardTrace<T> trace;
  Vector<T> grad_flat;
  ModelParams<T> params = start;
  for (long step = 0; step < config.iterations; ++step) {
    const double lr = lr_at(config, step);
    sampler.fill(step, config.batch_size, coords, targets);
    TailOutputs<T> outputs = forward_traced(params, coords, trace);
    LossResult<T> loss = total_loss(outputs, targets, config.weights, config.loss_kind);
    if (!std::isfinite(loss.total))
      throw TrainError("non-finite training loss " + std::to_string(loss.total), step);
    model::backward(params, trace, outputs, loss.grads, grad_flat);
    numerics::adam_step(flat, grad_flat, state, T(lr));
    params = model::unflatten(mc, flat);
    result.history.rows.push_back({step, lr, std::move(loss.per_tail), loss.total});
  }
  result.params = std::move(params);
  return result;
}

template <class T>
TrainResult<T> train(const TrainConfig& config, const ModelConfig& model_config,
                     BatchSource<T>& sampler) {
  return train_from(config, model::init_sine<T>(model_config), sampler);
}

template <class T>
ProbeResult<T> probe_retrain_heads(const ModelParams<T>& trunk,
                                   BatchSource<T>& sampler,
                                   const TrainConfig& head_config) {
  const ModelConfig& mc = trunk.config;
  if (model::has_per_layer_tails(mc.architecture))
    throw ConfigError("probe expects a plain_mlp or residual_mlp trunk");
  head_config.validate();
  head_config.weights.validate(1);
  const index k = mc.num_hidden_layers;
  const index w = mc.hidden_width;
  const index d = mc.output_dim;

  ProbeResult<T> result;
  result.models.resize(k);
  result.histories.resize(k);
  for (index j = k; j >= 1; --j) {
    ModelConfig head_mc = mc;
    head_mc.num_hidden_layers = j;
    ModelParams<T> m;
    m.config = head_mc;
    m.hidden_w.assign(trunk.hidden_w.begin(), trunk.hidden_w.begin() + j);
    m.hidden_b.assign(trunk.hidden_b.begin(), trunk.hidden_b.begin() + j);
    model::Tail<T> head;
    if (j == k) {
      head = trunk.tails[0];
    } else {
      Rng rng = Rng::derive(head_config.seed, kFreshHeadStream + j);
      const double bound = std::sqrt(6.0 / double(w)) / mc.omega0;
      head.w0 = Matrix<T>(d, w);
      for (auto& v : head.w0.data) v = T(rng.uniform(-bound, bound));
      head.b0.resize(d);
      for (auto& v : head.b0) v = T(rng.uniform(-bound, bound));
    }

    // optimize the head only; the trunk stays frozen
    Vector<T> head_flat(head.w0.data);
    head_flat.insert(head_flat.end(), head.b0.begin(), head.b0.end());
    numerics::AdamState<T> state(head_flat.size());
    TrainHistory history;
    history.rows.reserve(head_config.iterations);
    Matrix<T> coords, targets;
    for (long step = 0; step < head_config.iterations; ++step) {
      const double lr = lr_at(head_config, step);
      sampler.fill(step, head_config.batch_size, coords, targets);
      Matrix<T> feats = model::hidden_at(m, coords, j);
      Matrix<T> pred(feats.rows, d);
      for (index r = 0; r < pred.rows; ++r)
        for (index c = 0; c < d; ++c) pred.at(r, c) = head_flat[w * d + c];
      numerics::gemm(false, true, feats.rows, d, w, T(1), feats.data.data(), w,
                     head_flat.data(), w, T(1), pred.data.data(), d);

      TailOutputs<T> out;
      out.t.push_back(pred);
      out.y.push_back(std::move(pred));
      LossResult<T> loss =
          total_loss(out, targets, head_config.weights, head_config.loss_kind);
      if (!std::isfinite(loss.total))
        throw TrainError("non-finite probe loss at head " + std::to_string(j), step);

      Vector<T> grad(head_flat.size(), T(0));
      numerics::gemm(true, false, d, w, feats.rows, T(1), loss.grads[0].data.data(), d,
                     feats.data.data(), w, T(1), grad.data(), w);
      for (index r = 0; r < feats.rows; ++r)
        for (index c = 0; c < d; ++c) grad[w * d + c] += loss.grads[0].at(r, c);
      numerics::adam_step(head_flat, grad, state, T(lr));
      history.rows.push_back({step, lr, std::move(loss.per_tail), loss.total});
    }
    head.w0 = Matrix<T>(d, w, Vector<T>(head_flat.begin(), head_flat.begin() + d * w));
    head.b0.assign(head_flat.begin() + d * w, head_flat.end());
    m.tails = {std::move(head)};
    result.histories[j - 1] = std::move(history);
    result.models[j - 1] = std::move(m);
    if (j == 1) break;
  }
  return result;
}

template LossResult<float> total_loss<float>(const TailOutputs<float>&, const Matrix<float>&, const LossWeights&, LossKind);
template LossResult<double> total_loss<double>(const TailOutputs<double>&, const Matrix<double>&, const LossWeights&, LossKind);
template TrainResult<float> train<float>(const TrainConfig&, const ModelConfig&, BatchSource<float>&);
template TrainResult<double> train<double>(const TrainConfig&, const ModelConfig&, BatchSource<double>&);
template TrainResult<float> train_from<float>(const TrainConfig&, const ModelParams<float>&, BatchSource<float>&);
template TrainResult<double> train_from<double>(const TrainConfig&, const ModelParams<double>&, BatchSource<double>&);
template ProbeResult<float> probe_retrain_heads<float>(const ModelParams<float>&, BatchSource<float>&, const TrainConfig&);
template ProbeResult<double> probe_retrain_heads<double>(const ModelParams<double>&, BatchSource<double>&, const TrainConfig&);

}  // namespace tmlp::training

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tmlp/model.hpp"

namespace tmlp::training {

using model::index;
using model::Matrix;
using model::ModelConfig;
using model::ModelParams;
using model::TailOutputs;
using model::Vector;

enum class LossKind { l1_sdf, l2_image };

const char* loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

struct LossWeights {
  std::vector<double> lambda;

  void validate(index lod_count) const;
};

struct SchedulePoint {
  long step = 0;
  double multiplier = 1.0;
};

struct TrainConfig {
  long iterations = 10000;
  index batch_size = 4096;
  double initial_lr = 3e-4;
  std::vector<SchedulePoint> schedule;
  LossKind loss_kind = LossKind::l2_image;
  LossWeights weights;
  std::uint64_t seed = 0;

  void validate() const;
};

struct HistoryRow {
  long step = 0;
  double lr = 0;
  std::vector<double> per_tail;
  double total = 0;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;

  /// step,lr,loss_1..loss_k,total
  void write_csv(std::ostream& out) const;
};

/// Yields deterministic training batches: the batch for a given step must
/// depend only on the source's own configuration and the step index. Sources
/// backed by a finite population may return fewer rows than requested.
template <class T>
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual void fill(long step, index count, Matrix<T>& coords, Matrix<T>& targets) = 0;
  virtual index input_dim() const = 0;
  virtual index output_dim() const = 0;
};

template <class T>
struct LossResult {
  double total = 0;
  std::vector<double> per_tail;       // unweighted L(y_i)
  std::vector<Matrix<T>> grads;       // d total / d y_i, already scaled by lambda_i
};

/// Weighted multi-tail objective: sum_i lambda_i * L(y_i) with L the mean
/// absolute error (l1_sdf) or mean squared error (l2_image) over batch and
/// channels.
template <class T>
LossResult<T> total_loss(const TailOutputs<T>& tails, const Matrix<T>& gt,
                         const LossWeights& weights, LossKind kind);

/// initial_lr times the product of multipliers whose step <= step.
double lr_at(const TrainConfig& config, long step);

template <class T>
struct TrainResult {
  ModelParams<T> params;
  TrainHistory history;
};

template <class T>
TrainResult<T> train(const TrainConfig& config, const ModelConfig& model_config,
                     BatchSource<T>& sampler);

/// Continues training from existing params (used by the probe and by tests).
template <class T>
TrainResult<T> train_from(const TrainConfig& config, const ModelParams<T>& start,
                          BatchSource<T>& sampler);

template <class T>
struct ProbeResult {
  /// models[j-1] is M^j: trunk layers 1..j plus a retrained affine head.
  std::vector<ModelParams<T>> models;
  std::vector<TrainHistory> histories;
};

/// Iterative head retraining on a frozen trunk: for j = k down to 1, attach
/// an affine head at layer j (the original head for j = k, fresh otherwise)
/// and optimize only the head.
template <class T>
ProbeResult<T> probe_retrain_heads(const ModelParams<T>& trunk,
                                   BatchSource<T>& sampler,
                                   const TrainConfig& head_config);

}  // namespace tmlp::training

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tmlp/model.hpp"
#include "tmlp/signals.hpp"
#include "tmlp/training.hpp"

namespace tmlp::cli {

using model::index;

enum class TaskKind : std::uint8_t { image, sdf2d, sdf3d };

const char* task_name(TaskKind task);
TaskKind task_from_name(const std::string& name);

/// A reproducible run, read from a flat key-value config file. Keys use
/// sectioned names (model.*, train.*, signal.*, eval.*, probe.*,
/// render.*); '#' starts a comment. Unset keys take task-dependent
/// defaults. All randomness derives from the single `seed`.
struct RunConfig {
  TaskKind task = TaskKind::image;
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  model::ModelConfig model;      // input/output dims resolved from the task
  training::TrainConfig train;

  std::string image_path;        // image task
  signals::SdfShape shape;       // sdf tasks
  bool shape_set = false;
  double noise_sigma = 0;        // 8-bit scale, image task only

  std::vector<double> eval_levels;   // default: integer levels 1..lod_count
  index render_resolution = 0;       // 0 = task default

  long probe_head_iterations = 2000;
  std::vector<double> probe_lambda;  // default: all ones

  void validate() const;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

/// Trains per the config and writes model.tmlp, history.csv, metrics.csv,
/// and one render per eval level into the output directory.
void run_train(const RunConfig& config);

/// Evaluates a serialized model against the config's signal at the config's
/// eval levels; writes metrics.csv and prints the table.
void run_eval(const RunConfig& config, const std::string& model_path);

/// The head-retraining comparison: trains a plain trunk, retrains an affine
/// head at every depth on the frozen trunk, trains a matched tailed model,
/// and writes probe.csv with both PSNR columns.
void run_probe(const RunConfig& config);

/// Byte-prefix copy of a container through chunk j, header preserved.
void run_truncate(const std::string& model_path, index j,
                  const std::string& out_path);

/// Renders a serialized model at the given levels without needing a signal:
/// PNG grids for 2-input models, isosurface meshes for 3-input ones.
void run_render(const std::string& model_path, const std::vector<double>& levels,
                index resolution, const std::string& out_dir);

}  // namespace tmlp::cli

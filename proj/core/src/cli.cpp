#include "tmlp/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "tmlp/lod.hpp"
#include "tmlp/marching.hpp"
#include "tmlp/rng.hpp"
#include "tmlp/stream.hpp"

namespace tmlp::cli {

namespace fs = std::filesystem;

namespace {

// Seed streams for the run's random consumers. Model init (0), the image
// and SDF samplers (1, 2), and fresh probe heads (16+) are claimed by their
// modules.
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kEvalSurfaceStream = 4;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" +
                      value + "'");
  }
}

long parse_long(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const long n = long(v);
  if (double(n) != v)
    throw ConfigError("config key '" + key + "': expected an integer, got '" +
                      value + "'");
  return n;
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty())
    throw ConfigError("config key '" + key + "': expected a comma-separated list");
  return out;
}

std::vector<training::SchedulePoint> parse_schedule(const std::string& key,
                                                    const std::string& value) {
  std::vector<training::SchedulePoint> out;
  if (trim(value) == "none") return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("config key '" + key + "': expected step:multiplier pairs");
    out.push_back({parse_long(key, item.substr(0, colon)),
                   parse_double(key, item.substr(colon + 1))});
  }
  return out;
}

std::string level_tag(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", level);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out.good()) throw IoError("failed writing " + path.string());
}

}  // namespace

const char* task_name(TaskKind task) {
  switch (task) {
    case TaskKind::image: return "image";
    case TaskKind::sdf2d: return "sdf2d";
    case TaskKind::sdf3d: return "sdf3d";
  }
  throw ConfigError("unknown task id");
}

TaskKind task_from_name(const std::string& name) {
  if (name == "image") return TaskKind::image;
  if (name == "sdf2d") return TaskKind::sdf2d;
  if (name == "sdf3d") return TaskKind::sdf3d;
  throw ConfigError("unknown task '" + name + "' (expected image, sdf2d, sdf3d)");
}

void RunConfig::validate() const {
  if (task == TaskKind::image) {
    if (image_path.empty())
      throw ConfigError("image task needs signal.image = <path>");
    if (!fs::exists(image_path))
      throw ConfigError("signal.image file does not exist: " + image_path);
  } else {
    if (!shape_set)
      throw ConfigError(std::string(task_name(task)) +
                        " task needs signal.shape = <kind>");
    shape.validate();
    if (shape.dim() != (task == TaskKind::sdf2d ? 2 : 3))
      throw ConfigError(std::string("shape ") + signals::shape_kind_name(shape.kind) +
                        " does not match task " + task_name(task));
    if (noise_sigma != 0)
      throw ConfigError("signal.noise_sigma applies to the image task only");
  }
  if (noise_sigma < 0) throw ConfigError("signal.noise_sigma must be >= 0");
  train.weights.validate(model.lod_count());
  for (double l : eval_levels)
    if (!(l >= 1.0) || !(l <= double(model.lod_count())))
      throw ConfigError("eval level " + level_tag(l) + " outside [1, " +
                        std::to_string(model.lod_count()) + "]");
  if (probe_head_iterations < 1)
    throw ConfigError("probe.head_iterations must be >= 1");
}

RunConfig parse_run_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");
    if (!kv.emplace(key, value).second)
      throw ConfigError("duplicate config key '" + key + "'");
  }

  auto take = [&kv](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::string();
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  RunConfig cfg;
  const std::string task = take("task");
  if (task.empty()) throw ConfigError("config is missing required key 'task'");
  cfg.task = task_from_name(task);

  if (auto v = take("out"); !v.empty()) cfg.out_dir = v;
  if (auto v = take("seed"); !v.empty())
    cfg.seed = std::uint64_t(parse_long("seed", v));

  cfg.model.input_dim = cfg.task == TaskKind::sdf3d ? 3 : 2;
  cfg.model.output_dim = cfg.task == TaskKind::image ? 0 : 1;  // image: from file
  if (auto v = take("model.architecture"); !v.empty())
    cfg.model.architecture = model::architecture_from_name(v);
  if (auto v = take("model.width"); !v.empty())
    cfg.model.hidden_width = index(parse_long("model.width", v));
  if (auto v = take("model.layers"); !v.empty())
    cfg.model.num_hidden_layers = index(parse_long("model.layers", v));
  if (auto v = take("model.omega0"); !v.empty())
    cfg.model.omega0 = parse_double("model.omega0", v);
  cfg.model.seed = cfg.seed;

  const bool sdf = cfg.task != TaskKind::image;
  cfg.train.loss_kind =
      sdf ? training::LossKind::l1_sdf : training::LossKind::l2_image;
  if (sdf)
    cfg.train.schedule = {{7000, 0.25}, {8000, 0.25}, {9000, 0.25}};
  if (auto v = take("train.iterations"); !v.empty())
    cfg.train.iterations = parse_long("train.iterations", v);
  if (auto v = take("train.batch_size"); !v.empty())
    cfg.train.batch_size = index(parse_long("train.batch_size", v));
  if (auto v = take("train.lr"); !v.empty())
    cfg.train.initial_lr = parse_double("train.lr", v);
  if (auto v = take("train.loss"); !v.empty())
    cfg.train.loss_kind = training::loss_kind_from_name(v);
  if (auto v = take("train.schedule"); !v.empty())
    cfg.train.schedule = parse_schedule("train.schedule", v);
  if (auto v = take("train.lambda"); !v.empty())
    cfg.train.weights.lambda = parse_list("train.lambda", v);
  cfg.train.seed = cfg.seed;

  if (auto v = take("signal.image"); !v.empty()) cfg.image_path = v;
  if (auto v = take("signal.shape"); !v.empty()) {
    cfg.shape.kind = signals::shape_kind_from_name(v);
    cfg.shape_set = true;
  }
  if (auto v = take("signal.shape_params"); !v.empty())
    cfg.shape.params = parse_list("signal.shape_params", v);
  if (auto v = take("signal.noise_sigma"); !v.empty())
    cfg.noise_sigma = parse_double("signal.noise_sigma", v);

  if (auto v = take("eval.levels"); !v.empty())
    cfg.eval_levels = parse_list("eval.levels", v);
  if (auto v = take("render.resolution"); !v.empty())
    cfg.render_resolution = index(parse_long("render.resolution", v));
  if (auto v = take("probe.head_iterations"); !v.empty())
    cfg.probe_head_iterations = parse_long("probe.head_iterations", v);
  if (auto v = take("probe.lambda"); !v.empty())
    cfg.probe_lambda = parse_list("probe.lambda", v);

  if (!kv.empty())
    throw ConfigError("unknown config key '" + kv.begin()->first + "'");

  // Task-dependent defaults that need the final architecture and depth.
  const index lods = cfg.model.lod_count();
  if (cfg.train.weights.lambda.empty()) {
    if (lods == 5)
      cfg.train.weights.lambda =
          sdf ? std::vector<double>{0, 0.5, 0.5, 0.5, 2.5}
              : std::vector<double>{0, 0, 1, 1, 1};
    else
      cfg.train.weights.lambda.assign(lods, 1.0);
  }
  if (cfg.eval_levels.empty())
    for (index l = 1; l <= lods; ++l) cfg.eval_levels.push_back(double(l));

  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_run_config(in);
}

namespace {

index default_resolution(const RunConfig& cfg) {
  if (cfg.render_resolution > 0) return cfg.render_resolution;
  return cfg.task == TaskKind::sdf3d ? 64 : 128;
}

constexpr index kSurfacePoints = 2000;

/// Surface points of the analytic shape with normals from a central
/// difference of the signed distance.
std::vector<lod::OrientedPoint> reference_surface(const signals::SdfShape& shape,
                                                  index n, Rng& rng) {
  std::vector<lod::OrientedPoint> points(n);
  const int dim = int(shape.dim());
  for (auto& pt : points) {
    surface_sample(shape, rng, pt.p);
    constexpr double h = 1e-5;
    double norm = 0;
    for (int d = 0; d < dim; ++d) {
      double lo[3] = {pt.p[0], pt.p[1], pt.p[2]};
      double hi[3] = {pt.p[0], pt.p[1], pt.p[2]};
      lo[d] -= h;
      hi[d] += h;
      pt.n[d] = (analytic_sdf(shape, hi) - analytic_sdf(shape, lo)) / (2 * h);
      norm += pt.n[d] * pt.n[d];
    }
    norm = std::sqrt(norm);
    if (norm > 0)
      for (int d = 0; d < dim; ++d) pt.n[d] /= norm;
  }
  return points;
}

double grid_mean_abs_err(const std::vector<double>& field,
                         const signals::SdfShape& shape, index resolution) {
  const index dim = shape.dim();
  double acc = 0;
  if (dim == 2) {
    index i = 0;
    for (index r = 0; r < resolution; ++r) {
      const double y = -1.0 + double(2 * r + 1) / double(resolution);
      for (index c = 0; c < resolution; ++c, ++i) {
        const double p[3] = {-1.0 + double(2 * c + 1) / double(resolution), y, 0};
        acc += std::fabs(field[i] - analytic_sdf(shape, p));
      }
    }
  } else {
    index i = 0;
    for (index iz = 0; iz < resolution; ++iz) {
      const double z = -1.0 + double(2 * iz + 1) / double(resolution);
      for (index iy = 0; iy < resolution; ++iy) {
        const double y = -1.0 + double(2 * iy + 1) / double(resolution);
        for (index ix = 0; ix < resolution; ++ix, ++i) {
          const double p[3] = {-1.0 + double(2 * ix + 1) / double(resolution), y, z};
          acc += std::fabs(field[i] - analytic_sdf(shape, p));
        }
      }
    }
  }
  return acc / double(field.size());
}

/// Renders, writes per-level artifacts, and accumulates metric rows shared
/// by run_train and run_eval.
lod::MetricReport evaluate_model(const model::ModelParams<float>& params,
                                 const RunConfig& cfg,
                                 const signals::ImageSignal* reference_image,
                                 const fs::path& out_dir, bool write_renders) {
  lod::MetricReport report;
  for (double level : cfg.eval_levels) {
    lod::LodLevel lvl{level};
    lod::MetricRow row;
    row.level = level;
    if (cfg.task == TaskKind::image) {
      const auto render = lod::render_image(params, reference_image->width,
                                            reference_image->height, lvl);
      row.has_image = true;
      row.psnr = lod::psnr(render, *reference_image);
      row.ssim = lod::ssim(render, *reference_image);
      if (write_renders)
        signals::save_image(render,
                            (out_dir / ("lod_" + level_tag(level) + ".png")).string());
    } else {
      const index res = default_resolution(cfg);
      row.has_sdf = true;
      Rng rng = Rng::derive(cfg.seed, kEvalSurfaceStream);
      const auto reference = reference_surface(cfg.shape, kSurfacePoints, rng);
      if (cfg.task == TaskKind::sdf2d) {
        const auto field = lod::render_field2d(params, res, lvl);
        row.mean_abs_err = grid_mean_abs_err(field, cfg.shape, res);
        const auto contour = lod::marching_squares_unit(field, res, 0.0);
        if (write_renders)
          lod::write_obj_lines(
              contour, (out_dir / ("contour_" + level_tag(level) + ".obj")).string());
        const auto predicted = lod::sample_segments(contour, kSurfacePoints);
        const auto cn = lod::chamfer_and_normals(predicted, reference);
        row.chamfer = cn.chamfer;
        row.normal_consistency = cn.normal_consistency;
      } else {
        const auto field = lod::render_field3d(params, res, lvl);
        row.mean_abs_err = grid_mean_abs_err(field, cfg.shape, res);
        const auto mesh = lod::marching_cubes_unit(field, res, 0.0);
        if (write_renders)
          lod::write_obj_mesh(
              mesh, (out_dir / ("mesh_" + level_tag(level) + ".obj")).string());
        const auto predicted = lod::sample_triangles(mesh, kSurfacePoints);
        const auto cn = lod::chamfer_and_normals(predicted, reference);
        row.chamfer = cn.chamfer;
        row.normal_consistency = cn.normal_consistency;
      }
    }
    report.rows.push_back(row);
  }
  return report;
}

void print_and_write_report(const lod::MetricReport& report, const fs::path& path) {
  std::ostringstream ss;
  report.write_csv(ss);
  write_text_file(path, ss.str());
  std::cout << ss.str();
}

}  // namespace

void run_train(const RunConfig& config) {
  RunConfig cfg = config;
  cfg.validate();
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  signals::ImageSignal clean;
  std::unique_ptr<training::BatchSource<float>> sampler;
  if (cfg.task == TaskKind::image) {
    clean = signals::load_image(cfg.image_path);
    cfg.model.output_dim = clean.channels;
    signals::ImageSignal target = clean;
    if (cfg.noise_sigma > 0) {
      Rng rng = Rng::derive(cfg.seed, kNoiseStream);
      target = signals::add_gaussian_noise(clean, cfg.noise_sigma, rng);
      signals::save_image(target, (out_dir / "train_target.png").string());
    }
    sampler = std::make_unique<signals::ImageSampler<float>>(std::move(target),
                                                             cfg.seed);
  } else {
    sampler = std::make_unique<signals::SdfSampler<float>>(cfg.shape, cfg.seed);
  }
  cfg.model.validate();
  cfg.train.validate();

  const auto result = training::train<float>(cfg.train, cfg.model, *sampler);

  stream::write_container((out_dir / "model.tmlp").string(),
                          stream::encode(result.params));
  std::ostringstream history;
  result.history.write_csv(history);
  write_text_file(out_dir / "history.csv", history.str());

  const auto report = evaluate_model(result.params, cfg,
                                     cfg.task == TaskKind::image ? &clean : nullptr,
                                     out_dir, true);
  print_and_write_report(report, out_dir / "metrics.csv");
}

void run_eval(const RunConfig& config, const std::string& model_path) {
  RunConfig cfg = config;
  cfg.validate();
  const auto decoded = stream::decode_prefix(stream::read_container(model_path));
  const auto& params = decoded.params;

  signals::ImageSignal clean;
  if (cfg.task == TaskKind::image) {
    clean = signals::load_image(cfg.image_path);
    if (params.config.input_dim != 2 || params.config.output_dim != clean.channels)
      throw ShapeError("model " + std::to_string(params.config.input_dim) + "->" +
                       std::to_string(params.config.output_dim) +
                       " does not match a " + std::to_string(clean.channels) +
                       "-channel image");
  } else if (params.config.input_dim != cfg.shape.dim() ||
             params.config.output_dim != 1) {
    throw ShapeError("model dims do not match a scalar " +
                     std::string(task_name(cfg.task)) + " field");
  }

  // Evaluate at the decoded model's own depth, not the config's.
  RunConfig eval_cfg = cfg;
  eval_cfg.model = params.config;
  for (double l : cfg.eval_levels)
    if (l > double(params.config.lod_count()))
      throw ConfigError("eval level " + level_tag(l) + " exceeds the model's " +
                        std::to_string(params.config.lod_count()) + " levels");

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  const auto report = evaluate_model(params, eval_cfg,
                                     cfg.task == TaskKind::image ? &clean : nullptr,
                                     out_dir, false);
  print_and_write_report(report, out_dir / "metrics.csv");
}

void run_probe(const RunConfig& config) {
  RunConfig cfg = config;
  if (cfg.task != TaskKind::image)
    throw ConfigError("the probe command runs on the image task");
  cfg.validate();
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  signals::ImageSignal img = signals::load_image(cfg.image_path);
  cfg.model.output_dim = img.channels;
  const index k = cfg.model.num_hidden_layers;
  signals::ImageSampler<float> sampler(img, cfg.seed);

  model::ModelConfig trunk_config = cfg.model;
  trunk_config.architecture = model::Architecture::plain_mlp;
  training::TrainConfig trunk_train = cfg.train;
  trunk_train.loss_kind = training::LossKind::l2_image;
  trunk_train.weights.lambda = {1.0};
  const auto trunk = training::train<float>(trunk_train, trunk_config, sampler);

  training::TrainConfig head_train = trunk_train;
  head_train.iterations = cfg.probe_head_iterations;
  const auto probe = training::probe_retrain_heads(trunk.params, sampler, head_train);

  model::ModelConfig tailed_config = cfg.model;
  if (!model::has_per_layer_tails(tailed_config.architecture))
    tailed_config.architecture = model::Architecture::tmlp;
  training::TrainConfig tailed_train = cfg.train;
  tailed_train.loss_kind = training::LossKind::l2_image;
  tailed_train.weights.lambda = cfg.probe_lambda;
  if (tailed_train.weights.lambda.empty())
    tailed_train.weights.lambda.assign(k, 1.0);
  const auto tailed = training::train<float>(tailed_train, tailed_config, sampler);

  std::ostringstream table;
  table << "level,head_retrain_psnr,tailed_psnr\n";
  char buf[96];
  for (index j = 1; j <= k; ++j) {
    const auto head_render =
        lod::render_image(probe.models[j - 1], img.width, img.height, {1.0});
    const auto tailed_render =
        lod::render_image(tailed.params, img.width, img.height, {double(j)});
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", std::size_t(j),
                  lod::psnr(head_render, img), lod::psnr(tailed_render, img));
    table << buf;
  }
  write_text_file(out_dir / "probe.csv", table.str());
  std::cout << table.str();
}

void run_truncate(const std::string& model_path, index j,
                  const std::string& out_path) {
  const auto bytes = stream::read_container(model_path);
  const auto ranges = stream::chunk_iter(bytes);
  if (j < 1 || j > ranges.size())
    throw ConfigError("cannot keep " + std::to_string(j) + " layers of a " +
                      std::to_string(ranges.size()) + "-chunk container");
  const auto& last = ranges[j - 1];
  std::vector<std::uint8_t> prefix(bytes.begin(),
                                   bytes.begin() + long(last.offset + last.length));
  stream::write_container(out_path, prefix);
}

void run_render(const std::string& model_path, const std::vector<double>& levels,
                index resolution, const std::string& out_dir) {
  const auto decoded = stream::decode_prefix(stream::read_container(model_path));
  const auto& params = decoded.params;
  std::vector<double> use_levels = levels;
  if (use_levels.empty())
    for (index l = 1; l <= params.config.lod_count(); ++l)
      use_levels.push_back(double(l));

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  for (double level : use_levels) {
    if (params.config.input_dim == 2) {
      const index res = resolution > 0 ? resolution : 256;
      if (params.config.output_dim == 1 || params.config.output_dim == 3) {
        const auto img = lod::render_image(params, res, res, {level});
        signals::save_image(img,
                            (dir / ("lod_" + level_tag(level) + ".png")).string());
      } else {
        throw ShapeError("render supports 1- or 3-channel outputs");
      }
    } else if (params.config.input_dim == 3 && params.config.output_dim == 1) {
      const index res = resolution > 0 ? resolution : 64;
      const auto field = lod::render_field3d(params, res, {level});
      const auto mesh = lod::marching_cubes_unit(field, res, 0.0);
      lod::write_obj_mesh(mesh,
                          (dir / ("mesh_" + level_tag(level) + ".obj")).string());
    } else {
      throw ShapeError("render supports 2-input image models and 3-input scalar fields");
    }
  }
}

}  // namespace tmlp::cli

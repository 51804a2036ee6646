#pragma once

#include <string>
#include <vector>

#include "tmlp/model.hpp"
#include "tmlp/signals.hpp"

namespace tmlp::lod {

using model::index;
using model::Matrix;
using model::ModelParams;

/// Continuous level of detail in [1, k]; fractional levels blend adjacent
/// cumulative outputs: y_l = (1-alpha) y_l* + alpha y_{l*+1}.
struct LodLevel {
  double l = 1.0;

  index floor_level() const;
  double alpha() const;
  void validate(index k) const;
};

template <class T>
Matrix<T> eval_lod(const ModelParams<T>& params, const Matrix<T>& x_batch,
                   LodLevel level);

/// Evaluates the model on a pixel-center grid. Raw values are retained
/// (clamping to [0,1] happens only at PNG export).
template <class T>
signals::ImageSignal render_image(const ModelParams<T>& params, index width,
                                  index height, LodLevel level);

/// Scalar field on a pixel-center grid over [-1,1]^2, row-major.
template <class T>
std::vector<double> render_field2d(const ModelParams<T>& params, index resolution,
                                   LodLevel level);

/// Scalar field on a cell-center grid over [-1,1]^3, z-major then y then x
/// (value(ix,iy,iz) at index (iz*res + iy)*res + ix).
template <class T>
std::vector<double> render_field3d(const ModelParams<T>& params, index resolution,
                                   LodLevel level);

/// 10*log10(1/MSE) against peak 1.0, capped at 99 dB.
double psnr(const signals::ImageSignal& a, const signals::ImageSignal& b);

/// Mean local SSIM: 8x8 uniform windows, stride 1, C1=(0.01)^2, C2=(0.03)^2,
/// RGB reduced to Rec.601 luma.
double ssim(const signals::ImageSignal& a, const signals::ImageSignal& b);

struct OrientedPoint {
  double p[3] = {0, 0, 0};
  double n[3] = {0, 0, 0};
};

struct ChamferResult {
  double chamfer = 0;
  double normal_consistency = 0;
};

/// Symmetric mean nearest-neighbor distance and mean |cosine| of matched
/// normals, brute force.
ChamferResult chamfer_and_normals(const std::vector<OrientedPoint>& a,
                                  const std::vector<OrientedPoint>& b);

struct MetricRow {
  double level = 0;
  double psnr = 0;
  double ssim = 0;
  double mean_abs_err = 0;
  double chamfer = 0;
  double normal_consistency = 0;
  bool has_image = false;
  bool has_sdf = false;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  void write_csv(std::ostream& out) const;
};

}  // namespace tmlp::lod

#include "tmlp/lod.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace tmlp::lod {

namespace {

constexpr index kEvalChunk = 16384;

}  // namespace

index LodLevel::floor_level() const {
  const double f = std::floor(l);
  return index(f);
}

double LodLevel::alpha() const { return l - std::floor(l); }

void LodLevel::validate(index k) const {
  if (!(l >= 1.0) || !(l <= double(k)))
    throw ConfigError("lod level " + std::to_string(l) + " outside [1, " +
                      std::to_string(k) + "]");
}

template <class T>
Matrix<T> eval_lod(const ModelParams<T>& params, const Matrix<T>& x_batch,
                   LodLevel level) {
  level.validate(params.config.lod_count());
  if (params.config.lod_count() == 1) {
    auto out = model::forward(params, x_batch);
    return std::move(out.y.back());
  }
  const index lo = level.floor_level();
  const double alpha = level.alpha();
  if (alpha == 0.0) {
    auto out = model::forward(params, x_batch, lo);
    return std::move(out.y.back());
  }
  auto out = model::forward(params, x_batch, lo + 1);
  Matrix<T>& ylo = out.y[out.y.size() - 2];
  const Matrix<T>& yhi = out.y.back();
  for (index i = 0; i < ylo.size(); ++i)
    ylo.data[i] = T((1.0 - alpha) * double(ylo.data[i]) + alpha * double(yhi.data[i]));
  return std::move(ylo);
}

namespace {

/// Evaluates in fixed-size chunks to bound peak memory on large grids.
template <class T>
std::vector<double> eval_grid(const ModelParams<T>& params, const Matrix<T>& coords,
                              LodLevel level, index out_dim) {
  std::vector<double> values(coords.rows * out_dim);
  for (index start = 0; start < coords.rows; start += kEvalChunk) {
    const index n = std::min(kEvalChunk, coords.rows - start);
    Matrix<T> chunk(n, coords.cols);
    std::copy_n(coords.data.begin() + start * coords.cols, n * coords.cols,
                chunk.data.begin());
    Matrix<T> y = eval_lod(params, chunk, level);
    for (index i = 0; i < y.size(); ++i) values[start * out_dim + i] = double(y.data[i]);
  }
  return values;
}

}  // namespace

template <class T>
signals::ImageSignal render_image(const ModelParams<T>& params, index width,
                                  index height, LodLevel level) {
  if (width < 1 || height < 1) throw ConfigError("render resolution must be >= 1");
  if (params.config.input_dim != 2)
    throw ShapeError("render_image expects a 2D-input model");
  Matrix<T> coords = signals::image_coords<T>(width, height);
  signals::ImageSignal img;
  img.width = width;
  img.height = height;
  img.channels = params.config.output_dim;
  img.pixels = eval_grid(params, coords, level, params.config.output_dim);
  return img;
}

template <class T>
std::vector<double> render_field2d(const ModelParams<T>& params, index resolution,
                                   LodLevel level) {
  if (params.config.input_dim != 2 || params.config.output_dim != 1)
    throw ShapeError("render_field2d expects a 2D scalar model");
  Matrix<T> coords = signals::image_coords<T>(resolution, resolution);
  return eval_grid(params, coords, level, 1);
}

template <class T>
std::vector<double> render_field3d(const ModelParams<T>& params, index resolution,
                                   LodLevel level) {
  if (params.config.input_dim != 3 || params.config.output_dim != 1)
    throw ShapeError("render_field3d expects a 3D scalar model");
  if (resolution < 1) throw ConfigError("render resolution must be >= 1");
  Matrix<T> coords(resolution * resolution * resolution, 3);
  index row = 0;
  for (index iz = 0; iz < resolution; ++iz) {
    const double z = -1.0 + double(2 * iz + 1) / double(resolution);
    for (index iy = 0; iy < resolution; ++iy) {
      const double y = -1.0 + double(2 * iy + 1) / double(resolution);
      for (index ix = 0; ix < resolution; ++ix, ++row) {
        coords.at(row, 0) = T(-1.0 + double(2 * ix + 1) / double(resolution));
        coords.at(row, 1) = T(y);
        coords.at(row, 2) = T(z);
      }
    }
  }
  return eval_grid(params, coords, level, 1);
}

double psnr(const signals::ImageSignal& a, const signals::ImageSignal& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw ShapeError("psnr: image shapes differ");
  double mse = 0;
  for (index i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= double(a.pixels.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> to_luma(const signals::ImageSignal& img) {
  std::vector<double> luma(img.pixel_count());
  if (img.channels == 1) {
    luma = img.pixels;
  } else {
    for (index i = 0; i < luma.size(); ++i)
      luma[i] = 0.299 * img.pixels[3 * i] + 0.587 * img.pixels[3 * i + 1] +
                0.114 * img.pixels[3 * i + 2];
  }
  return luma;
}

}  // namespace

double ssim(const signals::ImageSignal& a, const signals::ImageSignal& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw ShapeError("ssim: image shapes differ");
  constexpr index kWin = 8;
  if (a.width < kWin || a.height < kWin)
    throw ShapeError("ssim: image smaller than the 8x8 window");
  const std::vector<double> x = to_luma(a);
  const std::vector<double> y = to_luma(b);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const double inv_n = 1.0 / double(kWin * kWin);

  double acc = 0;
  index windows = 0;
  for (index r0 = 0; r0 + kWin <= a.height; ++r0) {
    for (index c0 = 0; c0 + kWin <= a.width; ++c0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (index r = r0; r < r0 + kWin; ++r) {
        for (index c = c0; c < c0 + kWin; ++c) {
          const double xv = x[r * a.width + c];
          const double yv = y[r * a.width + c];
          sx += xv;
          sy += yv;
          sxx += xv * xv;
          syy += yv * yv;
          sxy += xv * yv;
        }
      }
      const double mx = sx * inv_n, my = sy * inv_n;
      const double vx = sxx * inv_n - mx * mx;
      const double vy = syy * inv_n - my * my;
      const double cov = sxy * inv_n - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return acc / double(windows);
}

ChamferResult chamfer_and_normals(const std::vector<OrientedPoint>& a,
                                  const std::vector<OrientedPoint>& b) {
  if (a.empty() || b.empty())
    throw ShapeError("chamfer_and_normals: point sets must be non-empty");
  auto directed = [](const std::vector<OrientedPoint>& from,
                     const std::vector<OrientedPoint>& to, double& dist, double& nc) {
    double dsum = 0, nsum = 0;
    for (const auto& p : from) {
      double best = -1;
      index best_i = 0;
      for (index i = 0; i < to.size(); ++i) {
        const double dx = p.p[0] - to[i].p[0];
        const double dy = p.p[1] - to[i].p[1];
        const double dz = p.p[2] - to[i].p[2];
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (best < 0 || d2 < best) {
          best = d2;
          best_i = i;
        }
      }
      dsum += std::sqrt(best);
      const auto& q = to[best_i];
      nsum += std::fabs(p.n[0] * q.n[0] + p.n[1] * q.n[1] + p.n[2] * q.n[2]);
    }
    dist = dsum / double(from.size());
    nc = nsum / double(from.size());
  };
  double dab, dba, nab, nba;
  directed(a, b, dab, nab);
  directed(b, a, dba, nba);
  return {0.5 * (dab + dba), 0.5 * (nab + nba)};
}

void MetricReport::write_csv(std::ostream& out) const {
  out << "level,psnr,ssim,mean_abs_err,chamfer,normal_consistency\n";
  char buf[32];
  auto field = [&](double v, bool present) {
    out << ',';
    if (present) {
      std::snprintf(buf, sizeof buf, "%.9g", v);
      out << buf;
    }
  };
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%g", row.level);
    out << buf;
    field(row.psnr, row.has_image);
    field(row.ssim, row.has_image);
    field(row.mean_abs_err, row.has_sdf);
    field(row.chamfer, row.has_sdf);
    field(row.normal_consistency, row.has_sdf);
    out << '\n';
  }
}

template Matrix<float> eval_lod<float>(const ModelParams<float>&, const Matrix<float>&, LodLevel);
template Matrix<double> eval_lod<double>(const ModelParams<double>&, const Matrix<double>&, LodLevel);
template signals::ImageSignal render_image<float>(const ModelParams<float>&, index, index, LodLevel);
template signals::ImageSignal render_image<double>(const ModelParams<double>&, index, index, LodLevel);
template std::vector<double> render_field2d<float>(const ModelParams<float>&, index, LodLevel);
template std::vector<double> render_field2d<double>(const ModelParams<double>&, index, LodLevel);
template std::vector<double> render_field3d<float>(const ModelParams<float>&, index, LodLevel);
template std::vector<double> render_field3d<double>(const ModelParams<double>&, index, LodLevel);

}  // namespace tmlp::lod

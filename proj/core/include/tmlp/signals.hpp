#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmlp/rng.hpp"
#include "tmlp/training.hpp"

namespace tmlp::signals {

using model::index;
using model::Matrix;

struct ImageSignal {
  index width = 0;
  index height = 0;
  index channels = 1;  // 1 or 3
  std::vector<double> pixels;  // row-major, channel-interleaved, values in [0,1]

  double at(index r, index c, index ch = 0) const {
    return pixels[(r * width + c) * channels + ch];
  }
  double& at(index r, index c, index ch = 0) {
    return pixels[(r * width + c) * channels + ch];
  }
  index pixel_count() const { return width * height; }
  void validate() const;
};

/// Reads an 8- or 16-bit PNG, scales to [0,1], drops alpha.
ImageSignal load_image(const std::string& path);

/// Writes an 8-bit non-interlaced PNG (grayscale or RGB); values clamped to
/// [0,1] at export.
void save_image(const ImageSignal& image, const std::string& path);

/// Pixel-center grid in [-1,1]^2: row r, col c -> x = -1 + (2c+1)/width,
/// y = -1 + (2r+1)/height. Rows of the result follow pixel row-major order;
/// column 0 is x, column 1 is y.
template <class T>
Matrix<T> image_coords(index width, index height);

template <class T>
Matrix<T> image_targets(const ImageSignal& image);

/// Additive per-channel Gaussian noise with sigma on the 8-bit scale
/// (sigma/255 in [0,1] units), clamped to [0,1].
ImageSignal add_gaussian_noise(const ImageSignal& image, double sigma_8bit, Rng& rng);

enum class ShapeKind : std::uint8_t {
  circle2d,
  box2d,
  polygon2d,
  sphere3d,
  torus3d,
  box3d,
};

const char* shape_kind_name(ShapeKind kind);
ShapeKind shape_kind_from_name(const std::string& name);

/// Analytic shapes inside [-1,1]^dim, centered at the origin.
///   circle2d: {radius}
///   box2d:    {half_x, half_y}
///   polygon2d:{x0,y0, x1,y1, ...} (>= 3 vertices)
///   sphere3d: {radius}
///   torus3d:  {ring_radius, tube_radius}, ring in the xz-plane
///   box3d:    {half_x, half_y, half_z}
struct SdfShape {
  ShapeKind kind = ShapeKind::circle2d;
  std::vector<double> params;

  index dim() const;
  void validate() const;
};

double analytic_sdf(const SdfShape& shape, const double* p);

/// Uniformly distributed exact surface point.
void surface_sample(const SdfShape& shape, Rng& rng, double* out);

struct SampleBatch {
  Matrix<double> coords;
  Matrix<double> targets;
  index count() const { return coords.rows; }
};

/// 20% uniform in the box, 40% exact surface, 40% surface points perturbed
/// by N(0, 0.01^2) per coordinate and clamped to the box, in that order;
/// targets are exact signed distances at the final positions.
SampleBatch sample_sdf_batch(const SdfShape& shape, index n, Rng& rng);

template <class T>
class ImageSampler : public training::BatchSource<T> {
 public:
  ImageSampler(ImageSignal image, std::uint64_t seed);

  void fill(long step, index count, Matrix<T>& coords, Matrix<T>& targets) override;
  index input_dim() const override { return 2; }
  index output_dim() const override { return image_.channels; }
  const ImageSignal& image() const { return image_; }

 private:
  ImageSignal image_;
  std::uint64_t seed_;
  Matrix<T> all_coords_;
  Matrix<T> all_targets_;
};

template <class T>
class SdfSampler : public training::BatchSource<T> {
 public:
  SdfSampler(SdfShape shape, std::uint64_t seed) : shape_(std::move(shape)), seed_(seed) {
    shape_.validate();
  }

  void fill(long step, index count, Matrix<T>& coords, Matrix<T>& targets) override;
  index input_dim() const override { return shape_.dim(); }
  index output_dim() const override { return 1; }
  const SdfShape& shape() const { return shape_; }

 private:
  SdfShape shape_;
  std::uint64_t seed_;
};

}  // namespace tmlp::signals

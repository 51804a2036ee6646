#include "tmlp/signals.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace tmlp::signals {

namespace {

// rng stream ids (0 = model init, 16+ = probe heads)
constexpr std::uint64_t kImageStream = 1;
constexpr std::uint64_t kSdfStream = 2;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

struct PngCloser {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  bool write = false;
  ~PngCloser() {
    if (png) {
      if (write)
        png_destroy_write_struct(&png, info ? &info : nullptr);
      else
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
    if (fp) std::fclose(fp);
  }
};

}  // namespace

void ImageSignal::validate() const {
  if (width < 1 || height < 1) throw ConfigError("image dimensions must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("image channels must be 1 or 3");
  if (pixels.size() != width * height * channels)
    throw ShapeError("image pixel count " + std::to_string(pixels.size()) +
                     " != " + std::to_string(width * height * channels));
  for (double v : pixels)
    if (!(v >= 0.0 && v <= 1.0))
      throw NumericError("image pixel outside [0,1]: " + std::to_string(v));
}

ImageSignal load_image(const std::string& path) {
  PngCloser c;
  c.fp = std::fopen(path.c_str(), "rb");
  if (!c.fp) throw IoError("cannot open '" + path + "' for reading");
  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  c.info = c.png ? png_create_info_struct(c.png) : nullptr;
  if (!c.info) throw IoError("libpng init failed for '" + path + "'");

  std::vector<png_byte> storage;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(c.png)))
    throw IoError("failed to decode PNG '" + path + "'");

  png_init_io(c.png, c.fp);
  png_read_info(c.png, c.info);
  png_uint_32 w = png_get_image_width(c.png, c.info);
  png_uint_32 h = png_get_image_height(c.png, c.info);
  int color = png_get_color_type(c.png, c.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(c.png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(c.png, c.info) < 8)
    png_set_expand_gray_1_2_4_to_8(c.png);
  if (png_get_valid(c.png, c.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(c.png);
  png_set_interlace_handling(c.png);
  png_read_update_info(c.png, c.info);

  const int bit_depth = png_get_bit_depth(c.png, c.info);
  const int nch = png_get_channels(c.png, c.info);
  const size_t rowbytes = png_get_rowbytes(c.png, c.info);
  storage.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = storage.data() + r * rowbytes;
  png_read_image(c.png, rows.data());
  png_read_end(c.png, nullptr);

  ImageSignal img;
  img.width = w;
  img.height = h;
  img.channels = (nch >= 3) ? 3 : 1;
  img.pixels.resize(size_t(w) * h * img.channels);
  const double scale = (bit_depth == 16) ? 65535.0 : 255.0;
  for (png_uint_32 r = 0; r < h; ++r) {
    const png_byte* row = rows[r];
    for (png_uint_32 col = 0; col < w; ++col) {
      for (index ch = 0; ch < img.channels; ++ch) {
        const size_t s = (size_t(col) * nch + ch);
        double v;
        if (bit_depth == 16)
          v = double((unsigned(row[2 * s]) << 8) | row[2 * s + 1]) / scale;
        else
          v = double(row[s]) / scale;
        img.at(r, col, ch) = v;
      }
    }
  }
  return img;
}

void save_image(const ImageSignal& image, const std::string& path) {
  // Model renders may stray outside [0,1]; they are clamped at quantization
  // below, so only the structural invariants are enforced here.
  if (image.width < 1 || image.height < 1)
    throw ConfigError("image dimensions must be >= 1");
  if (image.channels != 1 && image.channels != 3)
    throw ConfigError("image channels must be 1 or 3");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw ShapeError("image pixel count " + std::to_string(image.pixels.size()) +
                     " != " + std::to_string(image.width * image.height * image.channels));
  for (double v : image.pixels)
    if (!std::isfinite(v))
      throw NumericError("image pixel is not finite");
  PngCloser c;
  c.write = true;
  c.fp = std::fopen(path.c_str(), "wb");
  if (!c.fp) throw IoError("cannot open '" + path + "' for writing");
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  c.info = c.png ? png_create_info_struct(c.png) : nullptr;
  if (!c.info) throw IoError("libpng init failed for '" + path + "'");

  std::vector<png_byte> storage(image.width * image.height * image.channels);
  std::vector<png_bytep> rows(image.height);
  for (index i = 0; i < storage.size(); ++i)
    storage[i] = png_byte(std::lround(clamp01(image.pixels[i]) * 255.0));
  for (index r = 0; r < image.height; ++r)
    rows[r] = storage.data() + r * image.width * image.channels;

  if (setjmp(png_jmpbuf(c.png)))
    throw IoError("failed to encode PNG '" + path + "'");
  png_init_io(c.png, c.fp);
  png_set_IHDR(c.png, c.info, png_uint_32(image.width), png_uint_32(image.height), 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  png_write_image(c.png, rows.data());
  png_write_end(c.png, nullptr);
}

template <class T>
Matrix<T> image_coords(index width, index height) {
  Matrix<T> coords(width * height, 2);
  for (index r = 0; r < height; ++r) {
    const double y = -1.0 + double(2 * r + 1) / double(height);
    for (index c = 0; c < width; ++c) {
      const double x = -1.0 + double(2 * c + 1) / double(width);
      coords.at(r * width + c, 0) = T(x);
      coords.at(r * width + c, 1) = T(y);
    }
  }
  return coords;
}

template <class T>
Matrix<T> image_targets(const ImageSignal& image) {
  Matrix<T> t(image.pixel_count(), image.channels);
  for (index i = 0; i < t.size(); ++i) t.data[i] = T(image.pixels[i]);
  return t;
}

ImageSignal add_gaussian_noise(const ImageSignal& image, double sigma_8bit, Rng& rng) {
  if (sigma_8bit < 0) throw ConfigError("noise sigma must be >= 0");
  ImageSignal out = image;
  if (sigma_8bit == 0) return out;
  const double sigma = sigma_8bit / 255.0;
  for (double& v : out.pixels) v = clamp01(v + sigma * rng.normal());
  return out;
}

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle2d: return "circle2d";
    case ShapeKind::box2d: return "box2d";
    case ShapeKind::polygon2d: return "polygon2d";
    case ShapeKind::sphere3d: return "sphere3d";
    case ShapeKind::torus3d: return "torus3d";
    case ShapeKind::box3d: return "box3d";
  }
  return "?";
}

ShapeKind shape_kind_from_name(const std::string& name) {
  for (int i = 0; i <= int(ShapeKind::box3d); ++i)
    if (name == shape_kind_name(ShapeKind(i))) return ShapeKind(i);
  throw ConfigError("unknown shape kind '" + name + "'");
}

index SdfShape::dim() const {
  return (kind == ShapeKind::circle2d || kind == ShapeKind::box2d ||
          kind == ShapeKind::polygon2d)
             ? 2
             : 3;
}

void SdfShape::validate() const {
  auto need = [&](index n, const char* what) {
    if (params.size() != n)
      throw ConfigError(std::string(shape_kind_name(kind)) + " needs " + what);
  };
  switch (kind) {
    case ShapeKind::circle2d:
    case ShapeKind::sphere3d:
      need(1, "1 parameter (radius)");
      if (!(params[0] > 0)) throw ConfigError("radius must be > 0");
      break;
    case ShapeKind::box2d: need(2, "2 parameters (half extents)"); break;
    case ShapeKind::box3d: need(3, "3 parameters (half extents)"); break;
    case ShapeKind::torus3d:
      need(2, "2 parameters (ring radius, tube radius)");
      if (!(params[0] > params[1]) || !(params[1] > 0))
        throw ConfigError("torus needs ring_radius > tube_radius > 0");
      break;
    case ShapeKind::polygon2d:
      if (params.size() < 6 || params.size() % 2 != 0)
        throw ConfigError("polygon2d needs >= 3 (x,y) vertex pairs");
      break;
  }
  for (double p : params)
    if (!std::isfinite(p)) throw ConfigError("shape parameters must be finite");
}

namespace {

double sdf_circle(double r, const double* p) {
  return std::hypot(p[0], p[1]) - r;
}

double sdf_box2(const double* he, const double* p) {
  const double dx = std::fabs(p[0]) - he[0];
  const double dy = std::fabs(p[1]) - he[1];
  const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(dx, dy), 0.0);
}

double sdf_polygon(const std::vector<double>& v, const double* p) {
  const index n = v.size() / 2;
  double d = (p[0] - v[0]) * (p[0] - v[0]) + (p[1] - v[1]) * (p[1] - v[1]);
  double s = 1.0;
  for (index i = 0, j = n - 1; i < n; j = i, ++i) {
    const double ex = v[2 * j] - v[2 * i], ey = v[2 * j + 1] - v[2 * i + 1];
    const double wx = p[0] - v[2 * i], wy = p[1] - v[2 * i + 1];
    const double t = std::clamp((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    const double bx = wx - ex * t, by = wy - ey * t;
    d = std::min(d, bx * bx + by * by);
    const bool c0 = p[1] >= v[2 * i + 1];
    const bool c1 = p[1] < v[2 * j + 1];
    const bool c2 = ex * wy > ey * wx;
    if ((c0 && c1 && c2) || (!c0 && !c1 && !c2)) s = -s;
  }
  return s * std::sqrt(d);
}

double sdf_sphere(double r, const double* p) {
  return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - r;
}

double sdf_torus(double ring, double tube, const double* p) {
  const double qx = std::hypot(p[0], p[2]) - ring;
  return std::hypot(qx, p[1]) - tube;
}

double sdf_box3(const double* he, const double* p) {
  const double d[3] = {std::fabs(p[0]) - he[0], std::fabs(p[1]) - he[1],
                       std::fabs(p[2]) - he[2]};
  const double ox = std::max(d[0], 0.0), oy = std::max(d[1], 0.0),
               oz = std::max(d[2], 0.0);
  return std::sqrt(ox * ox + oy * oy + oz * oz) +
         std::min(std::max(d[0], std::max(d[1], d[2])), 0.0);
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

double analytic_sdf(const SdfShape& shape, const double* p) {
  switch (shape.kind) {
    case ShapeKind::circle2d: return sdf_circle(shape.params[0], p);
    case ShapeKind::box2d: return sdf_box2(shape.params.data(), p);
    case ShapeKind::polygon2d: return sdf_polygon(shape.params, p);
    case ShapeKind::sphere3d: return sdf_sphere(shape.params[0], p);
    case ShapeKind::torus3d: return sdf_torus(shape.params[0], shape.params[1], p);
    case ShapeKind::box3d: return sdf_box3(shape.params.data(), p);
  }
  throw ConfigError("unknown shape kind");
}

void surface_sample(const SdfShape& shape, Rng& rng, double* out) {
  switch (shape.kind) {
    case ShapeKind::circle2d: {
      const double a = kTwoPi * rng.uniform();
      out[0] = shape.params[0] * std::cos(a);
      out[1] = shape.params[0] * std::sin(a);
      return;
    }
    case ShapeKind::box2d: {
      const double hx = shape.params[0], hy = shape.params[1];
      double u = rng.uniform() * 4 * (hx + hy);
      if (u < 2 * hx) { out[0] = u - hx; out[1] = hy; return; }
      u -= 2 * hx;
      if (u < 2 * hx) { out[0] = u - hx; out[1] = -hy; return; }
      u -= 2 * hx;
      if (u < 2 * hy) { out[0] = hx; out[1] = u - hy; return; }
      u -= 2 * hy;
      out[0] = -hx; out[1] = u - hy;
      return;
    }
    case ShapeKind::polygon2d: {
      const auto& v = shape.params;
      const index n = v.size() / 2;
      double total = 0;
      for (index i = 0, j = n - 1; i < n; j = i, ++i)
        total += std::hypot(v[2 * i] - v[2 * j], v[2 * i + 1] - v[2 * j + 1]);
      double u = rng.uniform() * total;
      for (index i = 0, j = n - 1; i < n; j = i, ++i) {
        const double len = std::hypot(v[2 * i] - v[2 * j], v[2 * i + 1] - v[2 * j + 1]);
        if (u <= len || i == n - 1) {
          const double t = (len > 0) ? u / len : 0.0;
          out[0] = v[2 * j] + t * (v[2 * i] - v[2 * j]);
          out[1] = v[2 * j + 1] + t * (v[2 * i + 1] - v[2 * j + 1]);
          return;
        }
        u -= len;
      }
      return;
    }
    case ShapeKind::sphere3d: {
      double x, y, z, n2;
      do {
        x = rng.normal(); y = rng.normal(); z = rng.normal();
        n2 = x * x + y * y + z * z;
      } while (n2 == 0);
      const double s = shape.params[0] / std::sqrt(n2);
      out[0] = x * s; out[1] = y * s; out[2] = z * s;
      return;
    }
    case ShapeKind::torus3d: {
      const double ring = shape.params[0], tube = shape.params[1];
      double phi;
      // area element is proportional to ring + tube*cos(phi); rejection keeps
      // the sampling uniform over the surface
      do {
        phi = kTwoPi * rng.uniform();
      } while (rng.uniform() * (ring + tube) > ring + tube * std::cos(phi));
      const double theta = kTwoPi * rng.uniform();
      const double rad = ring + tube * std::cos(phi);
      out[0] = rad * std::cos(theta);
      out[1] = tube * std::sin(phi);
      out[2] = rad * std::sin(theta);
      return;
    }
    case ShapeKind::box3d: {
      const double hx = shape.params[0], hy = shape.params[1], hz = shape.params[2];
      const double areas[3] = {4 * hy * hz, 4 * hx * hz, 4 * hx * hy};
      double u = rng.uniform() * 2 * (areas[0] + areas[1] + areas[2]);
      int axis = 0;
      for (; axis < 2; ++axis) {
        if (u < 2 * areas[axis]) break;
        u -= 2 * areas[axis];
      }
      const double side = (u < areas[axis]) ? 1.0 : -1.0;
      const double he[3] = {hx, hy, hz};
      double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
      out[axis] = side * he[axis];
      out[(axis + 1) % 3] = a * he[(axis + 1) % 3];
      out[(axis + 2) % 3] = b * he[(axis + 2) % 3];
      return;
    }
  }
  throw ConfigError("unknown shape kind");
}

SampleBatch sample_sdf_batch(const SdfShape& shape, index n, Rng& rng) {
  if (n < 5) throw ConfigError("sample_sdf_batch needs n >= 5");
  const index dim = shape.dim();
  const index n_uniform = n / 5;
  const index n_surface = 2 * n / 5;
  const index n_perturbed = n - n_uniform - n_surface;

  SampleBatch batch;
  batch.coords = Matrix<double>(n, dim);
  batch.targets = Matrix<double>(n, 1);
  index row = 0;
  for (index i = 0; i < n_uniform; ++i, ++row)
    for (index d = 0; d < dim; ++d) batch.coords.at(row, d) = rng.uniform(-1, 1);
  for (index i = 0; i < n_surface; ++i, ++row)
    surface_sample(shape, rng, batch.coords.data.data() + row * dim);
  for (index i = 0; i < n_perturbed; ++i, ++row) {
    double* p = batch.coords.data.data() + row * dim;
    surface_sample(shape, rng, p);
    for (index d = 0; d < dim; ++d)
      p[d] = std::clamp(p[d] + 0.01 * rng.normal(), -1.0, 1.0);
  }
  for (index r = 0; r < n; ++r)
    batch.targets.at(r, 0) = analytic_sdf(shape, batch.coords.data.data() + r * dim);
  return batch;
}

template <class T>
ImageSampler<T>::ImageSampler(ImageSignal image, std::uint64_t seed)
    : image_(std::move(image)), seed_(seed) {
  image_.validate();
  all_coords_ = image_coords<T>(image_.width, image_.height);
  all_targets_ = image_targets<T>(image_);
}

template <class T>
void ImageSampler<T>::fill(long step, index count, Matrix<T>& coords,
                           Matrix<T>& targets) {
  const index n = image_.pixel_count();
  if (count >= n) {
    coords = all_coords_;
    targets = all_targets_;
    return;
  }
  coords = Matrix<T>(count, 2);
  targets = Matrix<T>(count, image_.channels);
  Rng rng = Rng::derive(seed_, kImageStream, std::uint64_t(step));
  for (index i = 0; i < count; ++i) {
    const index pick = rng.uniform_index(n);
    coords.at(i, 0) = all_coords_.at(pick, 0);
    coords.at(i, 1) = all_coords_.at(pick, 1);
    for (index ch = 0; ch < image_.channels; ++ch)
      targets.at(i, ch) = all_targets_.at(pick, ch);
  }
}

template <class T>
void SdfSampler<T>::fill(long step, index count, Matrix<T>& coords,
                         Matrix<T>& targets) {
  Rng rng = Rng::derive(seed_, kSdfStream, std::uint64_t(step));
  SampleBatch batch = sample_sdf_batch(shape_, count, rng);
  coords = Matrix<T>(batch.coords.rows, batch.coords.cols);
  for (index i = 0; i < coords.size(); ++i) coords.data[i] = T(batch.coords.data[i]);
  targets = Matrix<T>(batch.targets.rows, batch.targets.cols);
  for (index i = 0; i < targets.size(); ++i) targets.data[i] = T(batch.targets.data[i]);
}

template Matrix<float> image_coords<float>(index, index);
template Matrix<double> image_coords<double>(index, index);
template Matrix<float> image_targets<float>(const ImageSignal&);
template Matrix<double> image_targets<double>(const ImageSignal&);
template class ImageSampler<float>;
template class ImageSampler<double>;
template class SdfSampler<float>;
template class SdfSampler<double>;

}  // namespace tmlp::signals

#include "tmlp/marching.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tmlp/errors.hpp"

namespace tmlp::lod {

namespace {

#include "marching_tables.inc"

double lerp_cross(double iso, double va, double vb) {
  const double denom = vb - va;
  if (std::fabs(denom) < 1e-300) return 0.5;
  double t = (iso - va) / denom;
  if (t < 0) t = 0;
  if (t > 1) t = 1;
  return t;
}

}  // namespace

std::vector<Segment> marching_squares(const std::vector<double>& field, index width,
                                      index height, double iso, double x0, double y0,
                                      double dx, double dy) {
  if (width < 2 || height < 2) throw ShapeError("marching_squares: grid must be at least 2x2");
  if (field.size() != width * height)
    throw ShapeError("marching_squares: field size does not match grid");

  std::vector<Segment> segments;
  for (index iy = 0; iy + 1 < height; ++iy) {
    for (index ix = 0; ix + 1 < width; ++ix) {
      // Corners counter-clockwise from the (ix, iy) corner; edge e_i follows
      // corner c_i.
      const double c0 = field[iy * width + ix];
      const double c1 = field[iy * width + ix + 1];
      const double c2 = field[(iy + 1) * width + ix + 1];
      const double c3 = field[(iy + 1) * width + ix];
      unsigned mask = 0;
      if (c0 < iso) mask |= 1;
      if (c1 < iso) mask |= 2;
      if (c2 < iso) mask |= 4;
      if (c3 < iso) mask |= 8;
      if (mask == 0 || mask == 15) continue;

      const double xa = x0 + double(ix) * dx;
      const double ya = y0 + double(iy) * dy;
      double ex[4], ey[4];
      ex[0] = xa + lerp_cross(iso, c0, c1) * dx;
      ey[0] = ya;
      ex[1] = xa + dx;
      ey[1] = ya + lerp_cross(iso, c1, c2) * dy;
      ex[2] = xa + lerp_cross(iso, c3, c2) * dx;
      ey[2] = ya + dy;
      ex[3] = xa;
      ey[3] = ya + lerp_cross(iso, c0, c3) * dy;

      int pairs[2][2];
      int n_pairs = 1;
      switch (mask) {
        case 1: case 14: pairs[0][0] = 3; pairs[0][1] = 0; break;
        case 2: case 13: pairs[0][0] = 0; pairs[0][1] = 1; break;
        case 3: case 12: pairs[0][0] = 3; pairs[0][1] = 1; break;
        case 4: case 11: pairs[0][0] = 1; pairs[0][1] = 2; break;
        case 6: case 9:  pairs[0][0] = 0; pairs[0][1] = 2; break;
        case 7: case 8:  pairs[0][0] = 3; pairs[0][1] = 2; break;
        case 5: case 10: {
          // Saddle: the cell-center sample decides which diagonal corners
          // connect.
          const double center = 0.25 * (c0 + c1 + c2 + c3);
          const bool center_in = center < iso;
          n_pairs = 2;
          const bool join_02 = (mask == 5) == center_in;
          if (join_02) {
            pairs[0][0] = 0; pairs[0][1] = 1;
            pairs[1][0] = 2; pairs[1][1] = 3;
          } else {
            pairs[0][0] = 3; pairs[0][1] = 0;
            pairs[1][0] = 1; pairs[1][1] = 2;
          }
          break;
        }
        default: continue;
      }

      for (int p = 0; p < n_pairs; ++p) {
        Segment s;
        s.a[0] = ex[pairs[p][0]];
        s.a[1] = ey[pairs[p][0]];
        s.b[0] = ex[pairs[p][1]];
        s.b[1] = ey[pairs[p][1]];

        // Orient so the below-iso side is on the left of a->b: the bilinear
        // gradient at the midpoint must point to the right of the direction.
        const double mu = ((0.5 * (s.a[0] + s.b[0])) - xa) / dx;
        const double mv = ((0.5 * (s.a[1] + s.b[1])) - ya) / dy;
        const double gx = ((1 - mv) * (c1 - c0) + mv * (c2 - c3)) / dx;
        const double gy = ((1 - mu) * (c3 - c0) + mu * (c2 - c1)) / dy;
        const double dirx = s.b[0] - s.a[0];
        const double diry = s.b[1] - s.a[1];
        if (diry * gx - dirx * gy < 0) {
          std::swap(s.a[0], s.b[0]);
          std::swap(s.a[1], s.b[1]);
        }
        segments.push_back(s);
      }
    }
  }
  return segments;
}

std::vector<Segment> marching_squares_unit(const std::vector<double>& field,
                                           index resolution, double iso) {
  const double step = 2.0 / double(resolution);
  const double origin = -1.0 + 0.5 * step;
  return marching_squares(field, resolution, resolution, iso, origin, origin, step,
                          step);
}

std::vector<Triangle> marching_cubes(const std::vector<double>& field, index res_x,
                                     index res_y, index res_z, double iso, double x0,
                                     double y0, double z0, double dx, double dy,
                                     double dz) {
  if (res_x < 2 || res_y < 2 || res_z < 2)
    throw ShapeError("marching_cubes: grid must be at least 2x2x2");
  if (field.size() != res_x * res_y * res_z)
    throw ShapeError("marching_cubes: field size does not match grid");

  // Corner offsets (x, y, z): bottom face 0..3 loops in the xz-plane, top
  // face 4..7 above it; edge e connects kEdgeCorner[e][0] and [1].
  static constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                                        {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
  static constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                             {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                             {0, 4}, {1, 5}, {2, 6}, {3, 7}};

  std::vector<Triangle> triangles;
  double corner_val[8];
  double corner_pos[8][3];
  double vert[12][3];
  for (index iz = 0; iz + 1 < res_z; ++iz) {
    for (index iy = 0; iy + 1 < res_y; ++iy) {
      for (index ix = 0; ix + 1 < res_x; ++ix) {
        unsigned mask = 0;
        for (int c = 0; c < 8; ++c) {
          const index gx = ix + index(kCorner[c][0]);
          const index gy = iy + index(kCorner[c][1]);
          const index gz = iz + index(kCorner[c][2]);
          corner_val[c] = field[(gz * res_y + gy) * res_x + gx];
          corner_pos[c][0] = x0 + double(gx) * dx;
          corner_pos[c][1] = y0 + double(gy) * dy;
          corner_pos[c][2] = z0 + double(gz) * dz;
          if (corner_val[c] < iso) mask |= 1u << c;
        }
        const unsigned edges = kCubeEdgeTable[mask];
        if (edges == 0) continue;
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1u << e))) continue;
          const int a = kEdgeCorner[e][0];
          const int b = kEdgeCorner[e][1];
          const double t = lerp_cross(iso, corner_val[a], corner_val[b]);
          for (int d = 0; d < 3; ++d)
            vert[e][d] = corner_pos[a][d] + t * (corner_pos[b][d] - corner_pos[a][d]);
        }
        const signed char* row = kCubeTriTable[mask];
        for (int t = 0; row[t] != -1; t += 3) {
          Triangle tri;
          for (int v = 0; v < 3; ++v)
            for (int d = 0; d < 3; ++d) tri.v[v][d] = vert[int(row[t + v])][d];
          triangles.push_back(tri);
        }
      }
    }
  }
  return triangles;
}

std::vector<Triangle> marching_cubes_unit(const std::vector<double>& field,
                                          index resolution, double iso) {
  const double step = 2.0 / double(resolution);
  const double origin = -1.0 + 0.5 * step;
  return marching_cubes(field, resolution, resolution, resolution, iso, origin,
                        origin, origin, step, step, step);
}

double polyline_length(const std::vector<Segment>& segments) {
  double total = 0;
  for (const auto& s : segments)
    total += std::hypot(s.b[0] - s.a[0], s.b[1] - s.a[1]);
  return total;
}

namespace {

void triangle_normal_area(const Triangle& t, double n[3], double& area) {
  const double u[3] = {t.v[1][0] - t.v[0][0], t.v[1][1] - t.v[0][1],
                       t.v[1][2] - t.v[0][2]};
  const double v[3] = {t.v[2][0] - t.v[0][0], t.v[2][1] - t.v[0][1],
                       t.v[2][2] - t.v[0][2]};
  n[0] = u[1] * v[2] - u[2] * v[1];
  n[1] = u[2] * v[0] - u[0] * v[2];
  n[2] = u[0] * v[1] - u[1] * v[0];
  const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  area = 0.5 * len;
  if (len > 0) {
    n[0] /= len;
    n[1] /= len;
    n[2] /= len;
  }
}

}  // namespace

double mesh_area(const std::vector<Triangle>& triangles) {
  double total = 0;
  double n[3], area;
  for (const auto& t : triangles) {
    triangle_normal_area(t, n, area);
    total += area;
  }
  return total;
}

std::vector<OrientedPoint> sample_segments(const std::vector<Segment>& segments,
                                           index n_points) {
  const double total = polyline_length(segments);
  if (segments.empty() || total <= 0)
    throw ShapeError("sample_segments: nothing to sample");
  std::vector<OrientedPoint> points;
  points.reserve(n_points);
  const double step = total / double(n_points);
  index seg = 0;
  double seg_start = 0;
  double seg_len = std::hypot(segments[0].b[0] - segments[0].a[0],
                              segments[0].b[1] - segments[0].a[1]);
  for (index s = 0; s < n_points; ++s) {
    const double target = (double(s) + 0.5) * step;
    while (seg + 1 < segments.size() && seg_start + seg_len < target) {
      seg_start += seg_len;
      ++seg;
      seg_len = std::hypot(segments[seg].b[0] - segments[seg].a[0],
                           segments[seg].b[1] - segments[seg].a[1]);
    }
    const Segment& sg = segments[seg];
    const double t = seg_len > 0 ? (target - seg_start) / seg_len : 0.5;
    OrientedPoint p;
    p.p[0] = sg.a[0] + t * (sg.b[0] - sg.a[0]);
    p.p[1] = sg.a[1] + t * (sg.b[1] - sg.a[1]);
    if (seg_len > 0) {
      // Below-iso is left of a->b, so the outward normal is the right-hand
      // perpendicular.
      p.n[0] = (sg.b[1] - sg.a[1]) / seg_len;
      p.n[1] = -(sg.b[0] - sg.a[0]) / seg_len;
    }
    points.push_back(p);
  }
  return points;
}

std::vector<OrientedPoint> sample_triangles(const std::vector<Triangle>& triangles,
                                            index n_points) {
  const double total = mesh_area(triangles);
  if (triangles.empty() || total <= 0)
    throw ShapeError("sample_triangles: nothing to sample");
  std::vector<OrientedPoint> points;
  points.reserve(n_points);
  const double step = total / double(n_points);
  index tri = 0;
  double tri_start = 0;
  double n[3], area;
  triangle_normal_area(triangles[0], n, area);
  // Low-discrepancy barycentric offsets keep the sampling deterministic.
  constexpr double kR2a = 0.7548776662466927;
  constexpr double kR2b = 0.5698402909980532;
  for (index s = 0; s < n_points; ++s) {
    const double target = (double(s) + 0.5) * step;
    while (tri + 1 < triangles.size() && tri_start + area < target) {
      tri_start += area;
      ++tri;
      triangle_normal_area(triangles[tri], n, area);
    }
    double u = std::fmod(0.5 + double(s + 1) * kR2a, 1.0);
    double v = std::fmod(0.5 + double(s + 1) * kR2b, 1.0);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Triangle& t = triangles[tri];
    OrientedPoint p;
    for (int d = 0; d < 3; ++d) {
      p.p[d] = t.v[0][d] + u * (t.v[1][d] - t.v[0][d]) + v * (t.v[2][d] - t.v[0][d]);
      p.n[d] = n[d];
    }
    points.push_back(p);
  }
  return points;
}

void write_obj_lines(const std::vector<Segment>& segments, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[96];
  index v = 1;
  for (const auto& s : segments) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g 0\nv %.9g %.9g 0\n", s.a[0], s.a[1],
                  s.b[0], s.b[1]);
    out << buf;
    out << "l " << v << ' ' << v + 1 << '\n';
    v += 2;
  }
  if (!out.good()) throw IoError("failed writing " + path);
}

void write_obj_mesh(const std::vector<Triangle>& triangles, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[64];
  for (const auto& t : triangles) {
    for (int v = 0; v < 3; ++v) {
      std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", t.v[v][0], t.v[v][1],
                    t.v[v][2]);
      out << buf;
    }
  }
  index v = 1;
  for (index t = 0; t < triangles.size(); ++t, v += 3)
    out << "f " << v << ' ' << v + 1 << ' ' << v + 2 << '\n';
  if (!out.good()) throw IoError("failed writing " + path);
}

}  // namespace tmlp::lod

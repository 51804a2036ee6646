#pragma once

#include <array>
#include <string>
#include <vector>

#include "tmlp/lod.hpp"

namespace tmlp::lod {

struct Segment {
  double a[2];
  double b[2];
};

/// Zero-crossing segments of a bilinear field given at grid points, with the
/// saddle ambiguity resolved by the cell-center sample sign. Vertices are
/// emitted in world coordinates x = x0 + ix*dx, y = y0 + iy*dy, where
/// (ix, iy) index columns and rows of the grid.
std::vector<Segment> marching_squares(const std::vector<double>& field, index width,
                                      index height, double iso, double x0, double y0,
                                      double dx, double dy);

/// Convenience for fields rendered on the [-1,1]^2 pixel-center grid.
std::vector<Segment> marching_squares_unit(const std::vector<double>& field,
                                           index resolution, double iso);

struct Triangle {
  double v[3][3];
};

/// Standard table-driven marching cubes over a grid of corner values laid
/// out as field[(iz*res_y + iy)*res_x + ix].
std::vector<Triangle> marching_cubes(const std::vector<double>& field, index res_x,
                                     index res_y, index res_z, double iso, double x0,
                                     double y0, double z0, double dx, double dy,
                                     double dz);

std::vector<Triangle> marching_cubes_unit(const std::vector<double>& field,
                                          index resolution, double iso);

double polyline_length(const std::vector<Segment>& segments);
double mesh_area(const std::vector<Triangle>& triangles);

/// Evenly spreads sample points along segments; normals from the field
/// gradient side are supplied by the caller via the orientation convention
/// (left of a->b is negative field).
std::vector<OrientedPoint> sample_segments(const std::vector<Segment>& segments,
                                           index n_points);

/// Area-weighted sampling of triangle surfaces with triangle normals.
std::vector<OrientedPoint> sample_triangles(const std::vector<Triangle>& triangles,
                                            index n_points);

void write_obj_lines(const std::vector<Segment>& segments, const std::string& path);
void write_obj_mesh(const std::vector<Triangle>& triangles, const std::string& path);

}  // namespace tmlp::lod

#pragma once

#include "convfield/mesh.hpp"

#include <array>
#include <string>
#include <vector>

// Procedural closed solids used by the tests, the acceptance suite and the
// `convfield shape` helper.
namespace convfield::shapes {

TriangleMesh box(const Vec3& lo, const Vec3& hi);

// Union of axis-aligned unit cells scaled by cell_size, every exposed cell
// face split into subdivisions^2 quads so creases are resolved by the grid.
TriangleMesh voxel_solid(const std::vector<std::array<int, 3>>& cells, double cell_size,
                         int subdivisions);

TriangleMesh gridded_cube(int subdivisions);           // [-1,1]^3
TriangleMesh l_shape(int subdivisions = 4);            // [0,2]x[0,1]x[0,1] u [0,1]x[0,2]x[0,1]
TriangleMesh u_shape(int subdivisions = 4);
TriangleMesh t_shape(int subdivisions = 4);
TriangleMesh torus(double major, double minor, int nu, int nv);
TriangleMesh star_prism(int points, double r_outer, double r_inner, double height);
TriangleMesh icosphere(int level);
// Smooth lumpy body with a head and ears: a stand-in for scanned
// organic meshes (few hundred triangles at the default resolution).
TriangleMesh blob(int resolution = 20);
// Closed, zero-volume double-sided square.
TriangleMesh flat_sheet();
TriangleMesh two_boxes();

// Names accepted by by_name(): cube, grid_cube, l_shape, u_shape, t_shape,
// torus, star, sphere, blob, sheet, two_boxes.
TriangleMesh by_name(const std::string& name);
std::vector<std::string> names();

} // namespace convfield::shapes

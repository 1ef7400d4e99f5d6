#pragma once

#include "convfield/mesh.hpp"

#include <functional>

namespace convfield {

// Extracts the zero level set {f = 0} of an implicit function as a closed
// triangle mesh by marching tetrahedra on a (resolution+1)^3 node grid over
// `box`. Negative values are inside. f must be positive on the box boundary.
TriangleMesh polygonize(const std::function<double(const Vec3&)>& f, const Aabb& box,
                        int resolution);

// Rebuilds a watertight surface from an arbitrary triangle soup: unsigned
// distance on a grid, inside/outside by majority crossing parity along the
// three grid axes, then polygonize the offset surface half a cell outside
// the input. Used only when the input is not closed.
TriangleMesh voxel_repair(const TriangleMesh& soup, int resolution = 256);

} // namespace convfield

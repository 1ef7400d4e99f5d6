#pragma once

#include "convfield/hull.hpp"
#include "convfield/mesh.hpp"

#include <string>
#include <vector>

namespace convfield {

enum class MetricKind { Hausdorff, Chamfer };

MetricKind metric_from_string(const std::string& s);
std::string to_string(MetricKind kind);

struct ConcavityScore {
  double surface_h = 0.0;
  double volume_h = 0.0;
  double value = 0.0;           // max(surface_h, volume_h)
  bool empty_interior = false;  // no hull-interior sample hit the solid
};

// Concavity of the solid piece C = Vol(mesh) n hull against the hull.
// Boundary samples of C are mesh samples inside the hull plus hull samples
// inside the solid, area-proportional. Distances to the hull boundary and,
// whenever the closest mesh point lies in the hull, to C are exact; other
// distances to C fall back to the nearest boundary sample of C.
// Hausdorff takes the max of both directed distances, Chamfer the mean of
// the two directed means.
ConcavityScore concavity(const SolidMesh& mesh, const ConvexHull& hull, std::size_t n_samples,
                         std::uint64_t seed, MetricKind kind = MetricKind::Hausdorff);

// Symmetric mean Chamfer (unsquared) between n_samples mesh surface points
// and n_samples points on the boundary of the union of hulls.
double reconstruction_error(const SolidMesh& mesh, const std::vector<ConvexHull>& hulls,
                            std::size_t n_samples, std::uint64_t seed);

} // namespace convfield

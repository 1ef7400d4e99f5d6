#include "convfield/simd/kernels.hpp"

#include <limits>

namespace convfield::simd {
namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

void gather_dot(const double* q, const double* rows, std::size_t stride,
                const std::uint32_t* ids, std::size_t count, std::size_t n, double* out) {
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = dot(q, rows + static_cast<std::size_t>(ids[i]) * stride, n);
  }
}

void gather_dot2(const double* q1, const double* q2, const double* rows, std::size_t stride,
                 const std::uint32_t* ids, std::size_t count, std::size_t n, double* out1,
                 double* out2) {
  for (std::size_t i = 0; i < count; ++i) {
    const double* r = rows + static_cast<std::size_t>(ids[i]) * stride;
    out1[i] = dot(q1, r, n);
    out2[i] = dot(q2, r, n);
  }
}

void axpy2(double a, const double* x, double b, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] += a * x[i] + b * y[i];
  }
}

void dual_axpy(const double* x, double a, double* y1, double b, double* y2, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y1[i] += a * x[i];
    y2[i] += b * x[i];
  }
}

NearestHit nearest_point(const double* xs, const double* ys, const double* zs,
                         std::size_t n, const double q[3]) {
  NearestHit best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - q[0];
    const double dy = ys[i] - q[1];
    const double dz = zs[i] - q[2];
    const double d2 = (dx * dx + dy * dy) + dz * dz;
    if (d2 < best.dist2) {
      best = {d2, static_cast<std::uint32_t>(i)};
    }
  }
  return best;
}

// The operation order here is mirrored lane-for-lane by the AVX2 version.
void ray_triangles(const TriangleSoA& tris, std::size_t begin, std::size_t end,
                   const RayData& ray, double* t_out) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr double kDetEps = 1e-18;
  const double dx = ray.dir[0], dy = ray.dir[1], dz = ray.dir[2];
  for (std::size_t i = begin; i < end; ++i) {
    const double e1x = tris.e1[0][i], e1y = tris.e1[1][i], e1z = tris.e1[2][i];
    const double e2x = tris.e2[0][i], e2y = tris.e2[1][i], e2z = tris.e2[2][i];
    // p = d x e2
    const double px = dy * e2z - dz * e2y;
    const double py = dz * e2x - dx * e2z;
    const double pz = dx * e2y - dy * e2x;
    const double det = (e1x * px + e1y * py) + e1z * pz;
    double t = kInf;
    if (det > kDetEps || det < -kDetEps) {
      const double inv = 1.0 / det;
      const double sx = ray.origin[0] - tris.v0[0][i];
      const double sy = ray.origin[1] - tris.v0[1][i];
      const double sz = ray.origin[2] - tris.v0[2][i];
      const double u = ((sx * px + sy * py) + sz * pz) * inv;
      // q = s x e1
      const double qx = sy * e1z - sz * e1y;
      const double qy = sz * e1x - sx * e1z;
      const double qz = sx * e1y - sy * e1x;
      const double v = ((dx * qx + dy * qy) + dz * qz) * inv;
      const double tt = ((e2x * qx + e2y * qy) + e2z * qz) * inv;
      if (u >= 0.0 && u <= 1.0 && v >= 0.0 && (u + v) <= 1.0) {
        t = tt;
      }
    }
    t_out[i - begin] = t;
  }
}

} // namespace scalar

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      &scalar::dot,         &scalar::axpy,          &scalar::gather_dot,
      &scalar::gather_dot2, &scalar::axpy2,         &scalar::dual_axpy,
      &scalar::nearest_point,
      &scalar::ray_triangles};
  return table;
}

} // namespace convfield::simd

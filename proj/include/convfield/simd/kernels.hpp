#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference and,
// on x86-64, an AVX2 variant chosen once at startup from CPUID. The scalar
// versions are the semantic definition; tests check the vector versions
// against them.

#include <cstddef>
#include <cstdint>

namespace convfield::simd {

enum class Backend { Scalar, Avx2 };

struct NearestHit {
  double dist2;
  std::uint32_t index;
};

// Triangles as (v0, e1 = v1 - v0, e2 = v2 - v0), one array per coordinate.
struct TriangleSoA {
  const double* v0[3];
  const double* e1[3];
  const double* e2[3];
};

struct RayData {
  double origin[3];
  double dir[3];
};

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = dot(q, rows + ids[i] * stride, n)
  void (*gather_dot)(const double* q, const double* rows, std::size_t stride,
                     const std::uint32_t* ids, std::size_t count, std::size_t n,
                     double* out);
  // Two queries against the same rows in one pass.
  void (*gather_dot2)(const double* q1, const double* q2, const double* rows,
                      std::size_t stride, const std::uint32_t* ids, std::size_t count,
                      std::size_t n, double* out1, double* out2);
  // out += a * x + b * y
  void (*axpy2)(double a, const double* x, double b, const double* y, double* out,
                std::size_t n);
  // y1 += a * x; y2 += b * x
  void (*dual_axpy)(const double* x, double a, double* y1, double b, double* y2,
                    std::size_t n);
  // Minimum squared distance from q to the points (xs, ys, zs); ties resolve
  // to the lowest index. n must be >= 1.
  NearestHit (*nearest_point)(const double* xs, const double* ys, const double* zs,
                              std::size_t n, const double q[3]);
  // Moller-Trumbore ray parameter for triangles [begin, end) written to
  // t_out[i - begin]; +inf on miss.
  // No range test on t. Results are bitwise identical across backends.
  void (*ray_triangles)(const TriangleSoA& tris, std::size_t begin, std::size_t end,
                        const RayData& ray, double* t_out);
};

const KernelTable& scalar_kernels();
// nullptr when the AVX2 variant is not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

bool avx2_supported();
Backend active_backend();
// Throws Error(InvalidArgument) when the requested backend is unavailable.
void set_backend(Backend backend);
const char* backend_name(Backend backend);

const KernelTable& kernels();

inline double dot(const double* a, const double* b, std::size_t n) {
  return kernels().dot(a, b, n);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  kernels().axpy(alpha, x, y, n);
}

inline void gather_dot(const double* q, const double* rows, std::size_t stride,
                       const std::uint32_t* ids, std::size_t count, std::size_t n,
                       double* out) {
  kernels().gather_dot(q, rows, stride, ids, count, n, out);
}

inline void gather_dot2(const double* q1, const double* q2, const double* rows,
                        std::size_t stride, const std::uint32_t* ids, std::size_t count,
                        std::size_t n, double* out1, double* out2) {
  kernels().gather_dot2(q1, q2, rows, stride, ids, count, n, out1, out2);
}

inline void axpy2(double a, const double* x, double b, const double* y, double* out,
                  std::size_t n) {
  kernels().axpy2(a, x, b, y, out, n);
}

inline void dual_axpy(const double* x, double a, double* y1, double b, double* y2,
                      std::size_t n) {
  kernels().dual_axpy(x, a, y1, b, y2, n);
}

inline NearestHit nearest_point(const double* xs, const double* ys, const double* zs,
                                std::size_t n, const double q[3]) {
  return kernels().nearest_point(xs, ys, zs, n, q);
}

inline void ray_triangles(const TriangleSoA& tris, std::size_t begin, std::size_t end,
                          const RayData& ray, double* t_out) {
  kernels().ray_triangles(tris, begin, end, ray, t_out);
}

} // namespace convfield::simd

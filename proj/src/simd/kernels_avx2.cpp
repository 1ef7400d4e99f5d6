#include "convfield/simd/kernels.hpp"

#include <immintrin.h>

#include <limits>

namespace convfield::simd {

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
NearestHit nearest_point(const double* xs, const double* ys, const double* zs,
                         std::size_t n, const double q[3]);
void ray_triangles(const TriangleSoA& tris, std::size_t begin, std::size_t end,
                   const RayData& ray, double* t_out);
} // namespace scalar

namespace avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

} // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) {
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
  for (std::size_t r = 0; r < count; ++r) {
    const double* row = rows + static_cast<std::size_t>(ids[r]) * stride;
    if (r + 6 < count) {
      const double* next = rows + static_cast<std::size_t>(ids[r + 6]) * stride;
      for (std::size_t off = 0; off < n; off += 8) {
        _mm_prefetch(reinterpret_cast<const char*>(next + off), _MM_HINT_T0);
      }
    }
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d b0 = _mm256_setzero_pd(), b1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
      const __m256d x0 = _mm256_loadu_pd(row + i);
      const __m256d x1 = _mm256_loadu_pd(row + i + 4);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(q1 + i), x0, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(q1 + i + 4), x1, a1);
      b0 = _mm256_fmadd_pd(_mm256_loadu_pd(q2 + i), x0, b0);
      b1 = _mm256_fmadd_pd(_mm256_loadu_pd(q2 + i + 4), x1, b1);
    }
    if (i + 4 <= n) {
      const __m256d x0 = _mm256_loadu_pd(row + i);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(q1 + i), x0, a0);
      b0 = _mm256_fmadd_pd(_mm256_loadu_pd(q2 + i), x0, b0);
      i += 4;
    }
    double s1 = hsum(_mm256_add_pd(a0, a1));
    double s2 = hsum(_mm256_add_pd(b0, b1));
    for (; i < n; ++i) {
      s1 += q1[i] * row[i];
      s2 += q2[i] * row[i];
    }
    out1[r] = s1;
    out2[r] = s2;
  }
}

void axpy2(double a, const double* x, double b, const double* y, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d o = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(out + i));
    o = _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i), o);
    _mm256_storeu_pd(out + i, o);
  }
  for (; i < n; ++i) {
    out[i] += a * x[i] + b * y[i];
  }
}

void dual_axpy(const double* x, double a, double* y1, double b, double* y2, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y1 + i, _mm256_fmadd_pd(va, vx, _mm256_loadu_pd(y1 + i)));
    _mm256_storeu_pd(y2 + i, _mm256_fmadd_pd(vb, vx, _mm256_loadu_pd(y2 + i)));
  }
  for (; i < n; ++i) {
    y1[i] += a * x[i];
    y2[i] += b * x[i];
  }
}

NearestHit nearest_point(const double* xs, const double* ys, const double* zs,
                         std::size_t n, const double q[3]) {
  if (n < 8) {
    return scalar::nearest_point(xs, ys, zs, n, q);
  }
  const __m256d qx = _mm256_set1_pd(q[0]);
  const __m256d qy = _mm256_set1_pd(q[1]);
  const __m256d qz = _mm256_set1_pd(q[2]);
  __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d best_idx = _mm256_setzero_pd();
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d step = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), qx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), qy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), qz);
    const __m256d d2 = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)), _mm256_mul_pd(dz, dz));
    const __m256d better = _mm256_cmp_pd(d2, best, _CMP_LT_OQ);
    best = _mm256_blendv_pd(best, d2, better);
    best_idx = _mm256_blendv_pd(best_idx, idx, better);
    idx = _mm256_add_pd(idx, step);
  }
  alignas(32) double lane_d[4];
  alignas(32) double lane_i[4];
  _mm256_store_pd(lane_d, best);
  _mm256_store_pd(lane_i, best_idx);
  NearestHit result{lane_d[0], static_cast<std::uint32_t>(lane_i[0])};
  for (int l = 1; l < 4; ++l) {
    const auto li = static_cast<std::uint32_t>(lane_i[l]);
    if (lane_d[l] < result.dist2 || (lane_d[l] == result.dist2 && li < result.index)) {
      result = {lane_d[l], li};
    }
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - q[0];
    const double dy = ys[i] - q[1];
    const double dz = zs[i] - q[2];
    const double d2 = (dx * dx + dy * dy) + dz * dz;
    if (d2 < result.dist2) {
      result = {d2, static_cast<std::uint32_t>(i)};
    }
  }
  return result;
}

void ray_triangles(const TriangleSoA& tris, std::size_t begin, std::size_t end,
                   const RayData& ray, double* t_out) {
  const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d eps = _mm256_set1_pd(1e-18);
  const __m256d neg_eps = _mm256_set1_pd(-1e-18);
  const __m256d dx = _mm256_set1_pd(ray.dir[0]);
  const __m256d dy = _mm256_set1_pd(ray.dir[1]);
  const __m256d dz = _mm256_set1_pd(ray.dir[2]);
  const __m256d ox = _mm256_set1_pd(ray.origin[0]);
  const __m256d oy = _mm256_set1_pd(ray.origin[1]);
  const __m256d oz = _mm256_set1_pd(ray.origin[2]);
  std::size_t i = begin;
  for (; i + 4 <= end; i += 4) {
    const __m256d e1x = _mm256_loadu_pd(tris.e1[0] + i);
    const __m256d e1y = _mm256_loadu_pd(tris.e1[1] + i);
    const __m256d e1z = _mm256_loadu_pd(tris.e1[2] + i);
    const __m256d e2x = _mm256_loadu_pd(tris.e2[0] + i);
    const __m256d e2y = _mm256_loadu_pd(tris.e2[1] + i);
    const __m256d e2z = _mm256_loadu_pd(tris.e2[2] + i);
    const __m256d px = _mm256_sub_pd(_mm256_mul_pd(dy, e2z), _mm256_mul_pd(dz, e2y));
    const __m256d py = _mm256_sub_pd(_mm256_mul_pd(dz, e2x), _mm256_mul_pd(dx, e2z));
    const __m256d pz = _mm256_sub_pd(_mm256_mul_pd(dx, e2y), _mm256_mul_pd(dy, e2x));
    const __m256d det = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(e1x, px), _mm256_mul_pd(e1y, py)), _mm256_mul_pd(e1z, pz));
    const __m256d det_ok = _mm256_or_pd(_mm256_cmp_pd(det, eps, _CMP_GT_OQ),
                                        _mm256_cmp_pd(det, neg_eps, _CMP_LT_OQ));
    const __m256d inv = _mm256_div_pd(one, det);
    const __m256d sx = _mm256_sub_pd(ox, _mm256_loadu_pd(tris.v0[0] + i));
    const __m256d sy = _mm256_sub_pd(oy, _mm256_loadu_pd(tris.v0[1] + i));
    const __m256d sz = _mm256_sub_pd(oz, _mm256_loadu_pd(tris.v0[2] + i));
    const __m256d u = _mm256_mul_pd(
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(sx, px), _mm256_mul_pd(sy, py)),
                      _mm256_mul_pd(sz, pz)),
        inv);
    const __m256d qx = _mm256_sub_pd(_mm256_mul_pd(sy, e1z), _mm256_mul_pd(sz, e1y));
    const __m256d qy = _mm256_sub_pd(_mm256_mul_pd(sz, e1x), _mm256_mul_pd(sx, e1z));
    const __m256d qz = _mm256_sub_pd(_mm256_mul_pd(sx, e1y), _mm256_mul_pd(sy, e1x));
    const __m256d v = _mm256_mul_pd(
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, qx), _mm256_mul_pd(dy, qy)),
                      _mm256_mul_pd(dz, qz)),
        inv);
    const __m256d t = _mm256_mul_pd(
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(e2x, qx), _mm256_mul_pd(e2y, qy)),
                      _mm256_mul_pd(e2z, qz)),
        inv);
    __m256d ok = det_ok;
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(u, zero, _CMP_GE_OQ));
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(u, one, _CMP_LE_OQ));
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(v, zero, _CMP_GE_OQ));
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(_mm256_add_pd(u, v), one, _CMP_LE_OQ));
    _mm256_storeu_pd(t_out + (i - begin), _mm256_blendv_pd(inf, t, ok));
  }
  if (i < end) {
    scalar::ray_triangles(tris, i, end, ray, t_out + (i - begin));
  }
}

} // namespace avx2

const KernelTable* avx2_table() {
  static const KernelTable table{&avx2::dot,         &avx2::axpy,  &avx2::gather_dot,
                                 &avx2::gather_dot2, &avx2::axpy2, &avx2::dual_axpy,
                                 &avx2::nearest_point, &avx2::ray_triangles};
  return &table;
}

} // namespace convfield::simd

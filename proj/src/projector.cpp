#include "smdk/projector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>

namespace smdk {

namespace {

constexpr double kMmToCm = 0.1;
constexpr double kMinSegmentMm = 1e-10;

struct Grid {
  double xmin, xmax, ymin, ymax, pixel, inv_pixel;
  long cols, rows;

  explicit Grid(const FanBeamGeometry& g)
      : pixel(g.pixel_size_mm),
        inv_pixel(1.0 / g.pixel_size_mm),
        cols(static_cast<long>(g.image_width_px)),
        rows(static_cast<long>(g.image_height_px)) {
    xmax = 0.5 * static_cast<double>(cols) * pixel;
    xmin = -xmax;
    ymax = 0.5 * static_cast<double>(rows) * pixel;
    ymin = -ymax;
  }
};

// Clip t-range of a.x + t*d against [lo, hi]. Returns false when empty.
bool clip_axis(double a, double d, double lo, double hi, double& t0, double& t1) {
  if (d == 0.0) return a >= lo && a <= hi;
  double ta = (lo - a) / d;
  double tb = (hi - a) / d;
  if (ta > tb) std::swap(ta, tb);
  t0 = std::max(t0, ta);
  t1 = std::min(t1, tb);
  return t0 < t1;
}

// Plane crossings along one axis, visited in increasing t. Planes sit at
// lo + k * pixel for k = 0..n.
struct PlaneWalker {
  double a, d, lo, pixel;
  long k, step;
  double t;

  PlaneWalker(double a_, double d_, double lo_, double pixel_, double inv_pixel, double t0)
      : a(a_), d(d_), lo(lo_), pixel(pixel_) {
    if (d == 0.0) {
      k = 0;
      step = 0;
      t = std::numeric_limits<double>::infinity();
      return;
    }
    const double u = (a + t0 * d - lo) * inv_pixel;
    step = d > 0.0 ? 1 : -1;
    k = d > 0.0 ? static_cast<long>(std::floor(u)) + 1 : static_cast<long>(std::ceil(u)) - 1;
    t = plane_t();
    while (t <= t0) advance();
  }

  double plane_t() const { return (lo + static_cast<double>(k) * pixel - a) / d; }
  void advance() {
    if (step == 0) return;
    k += step;
    t = plane_t();
  }
};

// Visit every (pixel, length_mm) of the segment a -> b in traversal order.
template <class Visit>
void traverse(const Grid& g, Point2 a, Point2 b, Visit&& visit) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return;
  double t0 = 0.0;
  double t1 = 1.0;
  if (!clip_axis(a.x, dx, g.xmin, g.xmax, t0, t1)) return;
  if (!clip_axis(a.y, dy, g.ymin, g.ymax, t0, t1)) return;
  if ((t1 - t0) * len <= kMinSegmentMm) return;

  PlaneWalker wx(a.x, dx, g.xmin, g.pixel, g.inv_pixel, t0);
  PlaneWalker wy(a.y, dy, g.ymin, g.pixel, g.inv_pixel, t0);
  double t = t0;
  while (t < t1) {
    const double tn = std::min({wx.t, wy.t, t1});
    const double seg = (tn - t) * len;
    if (seg > kMinSegmentMm) {
      const double mid = 0.5 * (t + tn);
      long col = static_cast<long>(std::floor((a.x + mid * dx - g.xmin) * g.inv_pixel));
      long row = static_cast<long>(std::floor((g.ymax - (a.y + mid * dy)) * g.inv_pixel));
      col = std::clamp(col, 0L, g.cols - 1);
      row = std::clamp(row, 0L, g.rows - 1);
      visit(static_cast<std::size_t>(row * g.cols + col), seg);
    }
    t = tn;
    while (wx.t <= t) wx.advance();
    while (wy.t <= t) wy.advance();
  }
}

// Visit all sub-rays of one detector element with lengths already scaled to
// cm and divided by the sub-ray count.
template <class Visit>
void traverse_ray(const FanBeamGeometry& geom, const Grid& grid, std::size_t view,
                  std::size_t det, Visit&& visit) {
  const double scale = kMmToCm / static_cast<double>(geom.sub_rays);
  for (std::size_t s = 0; s < geom.sub_rays; ++s) {
    const auto [src, dst] = ray_endpoints(geom, view, det, s);
    traverse(grid, src, dst, [&](std::size_t pix, double len) { visit(pix, len * scale); });
  }
}

void check_image_shape(const Tensor3& images, const FanBeamGeometry& geom) {
  if (images.rows() != geom.image_height_px || images.cols() != geom.image_width_px) {
    throw std::invalid_argument("projector: image shape " + std::to_string(images.rows()) + "x" +
                                std::to_string(images.cols()) + " does not match geometry " +
                                std::to_string(geom.image_height_px) + "x" +
                                std::to_string(geom.image_width_px));
  }
}

void check_sino_shape(const Tensor3& sino, const FanBeamGeometry& geom) {
  if (sino.rows() != geom.num_views || sino.cols() != geom.num_detectors) {
    throw std::invalid_argument("projector: sinogram shape " + std::to_string(sino.rows()) + "x" +
                                std::to_string(sino.cols()) + " does not match geometry " +
                                std::to_string(geom.num_views) + "x" +
                                std::to_string(geom.num_detectors));
  }
}

}  // namespace

std::pair<Point2, Point2> ray_endpoints(const FanBeamGeometry& geom, std::size_t view,
                                        std::size_t detector, std::size_t sub_ray) {
  const double theta = geom.start_angle_rad + static_cast<double>(view) * geom.angular_range_rad /
                                                  static_cast<double>(geom.num_views);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double r = geom.source_to_isocenter_mm;
  const Point2 src{r * c, r * s};
  const double centre = 0.5 * (static_cast<double>(geom.num_detectors) - 1.0);
  const double sub = (static_cast<double>(sub_ray) + 0.5) / static_cast<double>(geom.sub_rays) - 0.5;
  const double u =
      (static_cast<double>(detector) - centre + geom.detector_offset_px + sub) * geom.detector_pitch_mm;
  const double back = r - geom.source_to_detector_mm;  // detector centre along (c, s)
  const Point2 dst{back * c - u * s, back * s + u * c};
  return {src, dst};
}

RayIntersectionList trace_line(const FanBeamGeometry& geom, Point2 from, Point2 to) {
  RayIntersectionList out;
  traverse(Grid(geom), from, to, [&](std::size_t pix, double len) {
    out.entries.push_back({pix, len});
  });
  std::sort(out.entries.begin(), out.entries.end(),
            [](const auto& a, const auto& b) { return a.pixel_index < b.pixel_index; });
  for (const auto& e : out.entries) out.total_length_mm += e.length_mm;
  return out;
}

RayIntersectionList trace_ray(const FanBeamGeometry& geom, std::size_t view, std::size_t detector) {
  if (view >= geom.num_views || detector >= geom.num_detectors) {
    throw std::out_of_range("trace_ray: view/detector index out of range");
  }
  const Grid grid(geom);
  std::vector<RayIntersection> raw;
  const double w = 1.0 / static_cast<double>(geom.sub_rays);
  for (std::size_t s = 0; s < geom.sub_rays; ++s) {
    const auto [src, dst] = ray_endpoints(geom, view, detector, s);
    traverse(grid, src, dst, [&](std::size_t pix, double len) { raw.push_back({pix, len * w}); });
  }
  std::stable_sort(raw.begin(), raw.end(),
                   [](const auto& a, const auto& b) { return a.pixel_index < b.pixel_index; });
  RayIntersectionList out;
  for (const auto& e : raw) {
    if (!out.entries.empty() && out.entries.back().pixel_index == e.pixel_index) {
      out.entries.back().length_mm += e.length_mm;
    } else {
      out.entries.push_back(e);
    }
  }
  for (const auto& e : out.entries) out.total_length_mm += e.length_mm;
  return out;
}

struct Projector::Cache {
  std::once_flag once;
  SartNormalizers normalizers;

  std::once_flag matrix_once;
  std::vector<std::size_t> offsets;  // L + 1
  std::vector<std::uint32_t> pixels;
  std::vector<double> weights;
};

Projector::Projector(FanBeamGeometry geom, MatrixCache matrix_cache)
    : geom_(geom), cache_(std::make_shared<Cache>()) {
  geom_.validate();
  // A ray crosses at most rows + cols pixels per sub-ray.
  const std::size_t bound = geom_.num_rays() * geom_.sub_rays * (geom_.image_width_px + geom_.image_height_px);
  matrix_enabled_ = matrix_cache == MatrixCache::kAuto &&
                    geom_.num_pixels() <= std::numeric_limits<std::uint32_t>::max() &&
                    bound * (sizeof(std::uint32_t) + sizeof(double)) <= kMatrixCacheBytes;
}

bool Projector::uses_matrix_cache() const { return matrix_enabled_; }

void Projector::ensure_matrix() const {
  if (!matrix_enabled_) return;
  std::call_once(cache_->matrix_once, [this] {
    const Grid grid(geom_);
    const std::size_t L = geom_.num_rays();
    const std::size_t ndet = geom_.num_detectors;
    auto& c = *cache_;
    std::vector<std::size_t> counts(L);
#pragma omp parallel for schedule(static)
    for (std::size_t ray = 0; ray < L; ++ray) {
      std::size_t n = 0;
      traverse_ray(geom_, grid, ray / ndet, ray % ndet, [&](std::size_t, double) { ++n; });
      counts[ray] = n;
    }
    c.offsets.assign(L + 1, 0);
    for (std::size_t ray = 0; ray < L; ++ray) c.offsets[ray + 1] = c.offsets[ray] + counts[ray];
    c.pixels.resize(c.offsets[L]);
    c.weights.resize(c.offsets[L]);
#pragma omp parallel for schedule(static)
    for (std::size_t ray = 0; ray < L; ++ray) {
      std::size_t i = c.offsets[ray];
      traverse_ray(geom_, grid, ray / ndet, ray % ndet, [&](std::size_t pix, double w) {
        c.pixels[i] = static_cast<std::uint32_t>(pix);
        c.weights[i++] = w;
      });
    }
  });
}

template <class Visit>
void Projector::visit_row(std::size_t view, std::size_t det, Visit&& visit) const {
  if (!matrix_enabled_) {
    traverse_ray(geom_, Grid(geom_), view, det, visit);
    return;
  }
  const auto& c = *cache_;
  const std::size_t ray = view * geom_.num_detectors + det;
  for (std::size_t i = c.offsets[ray]; i < c.offsets[ray + 1]; ++i) visit(c.pixels[i], c.weights[i]);
}

void Projector::view_rows(std::size_t view, ViewRows& out) const {
  if (view >= geom_.num_views) throw std::out_of_range("view_rows: view index out of range");
  ensure_matrix();
  const std::size_t ndet = geom_.num_detectors;
  out.offsets.assign(ndet + 1, 0);
  if (matrix_enabled_) {
    const auto& c = *cache_;
    const std::size_t first = c.offsets[view * ndet];
    for (std::size_t d = 0; d <= ndet; ++d) out.offsets[d] = c.offsets[view * ndet + d] - first;
    const std::size_t last = c.offsets[(view + 1) * ndet];
    out.pixels.assign(c.pixels.begin() + static_cast<std::ptrdiff_t>(first),
                      c.pixels.begin() + static_cast<std::ptrdiff_t>(last));
    out.weights.assign(c.weights.begin() + static_cast<std::ptrdiff_t>(first),
                       c.weights.begin() + static_cast<std::ptrdiff_t>(last));
    return;
  }
  if (geom_.num_pixels() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("view_rows: pixel index exceeds 32 bits");
  }
  const Grid grid(geom_);
#pragma omp parallel for schedule(static)
  for (std::size_t d = 0; d < ndet; ++d) {
    std::size_t n = 0;
    traverse_ray(geom_, grid, view, d, [&](std::size_t, double) { ++n; });
    out.offsets[d + 1] = n;
  }
  for (std::size_t d = 0; d < ndet; ++d) out.offsets[d + 1] += out.offsets[d];
  out.pixels.resize(out.offsets[ndet]);
  out.weights.resize(out.offsets[ndet]);
#pragma omp parallel for schedule(static)
  for (std::size_t d = 0; d < ndet; ++d) {
    std::size_t i = out.offsets[d];
    traverse_ray(geom_, grid, view, d, [&](std::size_t pix, double w) {
      out.pixels[i] = static_cast<std::uint32_t>(pix);
      out.weights[i++] = w;
    });
  }
}

Tensor3 Projector::forward(const Tensor3& images) const {
  check_image_shape(images, geom_);
  ensure_matrix();
  const std::size_t K = images.slices();
  const std::size_t J = images.slice_size();
  const std::size_t L = geom_.num_rays();
  const std::size_t ndet = geom_.num_detectors;
  Tensor3 sino(geom_.num_views, ndet, K);
  const double* img = images.data();
  double* out = sino.data();

#pragma omp parallel
  {
    std::vector<double> acc(K);
#pragma omp for schedule(static)
    for (std::size_t ray = 0; ray < L; ++ray) {
      std::fill(acc.begin(), acc.end(), 0.0);
      visit_row(ray / ndet, ray % ndet, [&](std::size_t pix, double w) {
        for (std::size_t k = 0; k < K; ++k) acc[k] += w * img[k * J + pix];
      });
      for (std::size_t k = 0; k < K; ++k) out[k * L + ray] = acc[k];
    }
  }
  return sino;
}

Tensor3 Projector::back(const Tensor3& sinograms) const {
  check_sino_shape(sinograms, geom_);
  ensure_matrix();
  const std::size_t K = sinograms.slices();
  const std::size_t J = geom_.num_pixels();
  const std::size_t L = geom_.num_rays();
  const std::size_t ndet = geom_.num_detectors;
  const std::size_t nviews = geom_.num_views;
  const std::size_t nblocks = std::min(kBackProjectionBlocks, nviews);
  const double* sino = sinograms.data();

  std::vector<std::vector<double>> partial(nblocks);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t b = 0; b < nblocks; ++b) {
    auto& buf = partial[b];
    buf.assign(K * J, 0.0);
    const std::size_t v0 = b * nviews / nblocks;
    const std::size_t v1 = (b + 1) * nviews / nblocks;
    for (std::size_t v = v0; v < v1; ++v) {
      for (std::size_t d = 0; d < ndet; ++d) {
        const std::size_t ray = v * ndet + d;
        visit_row(v, d, [&](std::size_t pix, double w) {
          for (std::size_t k = 0; k < K; ++k) buf[k * J + pix] += w * sino[k * L + ray];
        });
      }
    }
  }

  Tensor3 images(geom_.image_height_px, geom_.image_width_px, K);
  double* out = images.data();
  const std::size_t total = K * J;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < total; ++i) {
    double s = 0.0;
    for (std::size_t b = 0; b < nblocks; ++b) s += partial[b][i];
    out[i] = s;
  }
  return images;
}

SinogramStack Projector::forward(const ChannelImageStack& images) const {
  return {forward(images.data), geom_};
}

ChannelImageStack Projector::back(const SinogramStack& sino) const {
  return {back(sino.data), geom_};
}

const SartNormalizers& Projector::normalizers() const {
  std::call_once(cache_->once, [this] {
    auto& n = cache_->normalizers;
    const Tensor3 rows =
        forward(Tensor3(geom_.image_height_px, geom_.image_width_px, 1, 1.0));
    const Tensor3 cols = back(Tensor3(geom_.num_views, geom_.num_detectors, 1, 1.0));
    n.row_sums.assign(rows.values().begin(), rows.values().end());
    n.col_sums.assign(cols.values().begin(), cols.values().end());
    n.zero_rows = static_cast<std::size_t>(std::count(n.row_sums.begin(), n.row_sums.end(), 0.0));
    n.zero_cols = static_cast<std::size_t>(std::count(n.col_sums.begin(), n.col_sums.end(), 0.0));
  });
  return cache_->normalizers;
}

Tensor3 forward_project(const Tensor3& images, const FanBeamGeometry& geom) {
  return Projector(geom).forward(images);
}

Tensor3 back_project(const Tensor3& sinograms, const FanBeamGeometry& geom) {
  return Projector(geom).back(sinograms);
}

SartNormalizers sart_normalizers(const FanBeamGeometry& geom) {
  return Projector(geom).normalizers();
}

namespace serial {

Tensor3 forward_project(const Tensor3& images, const FanBeamGeometry& geom) {
  geom.validate();
  check_image_shape(images, geom);
  const Grid grid(geom);
  const std::size_t K = images.slices();
  const std::size_t J = images.slice_size();
  const std::size_t L = geom.num_rays();
  Tensor3 sino(geom.num_views, geom.num_detectors, K);
  std::vector<double> acc(K);
  for (std::size_t v = 0; v < geom.num_views; ++v) {
    for (std::size_t d = 0; d < geom.num_detectors; ++d) {
      std::fill(acc.begin(), acc.end(), 0.0);
      traverse_ray(geom, grid, v, d, [&](std::size_t pix, double w) {
        for (std::size_t k = 0; k < K; ++k) acc[k] += w * images.data()[k * J + pix];
      });
      const std::size_t ray = v * geom.num_detectors + d;
      for (std::size_t k = 0; k < K; ++k) sino.data()[k * L + ray] = acc[k];
    }
  }
  return sino;
}

Tensor3 back_project(const Tensor3& sinograms, const FanBeamGeometry& geom) {
  geom.validate();
  check_sino_shape(sinograms, geom);
  const Grid grid(geom);
  const std::size_t K = sinograms.slices();
  const std::size_t J = geom.num_pixels();
  const std::size_t L = geom.num_rays();
  Tensor3 images(geom.image_height_px, geom.image_width_px, K);
  for (std::size_t v = 0; v < geom.num_views; ++v) {
    for (std::size_t d = 0; d < geom.num_detectors; ++d) {
      const std::size_t ray = v * geom.num_detectors + d;
      traverse_ray(geom, grid, v, d, [&](std::size_t pix, double w) {
        for (std::size_t k = 0; k < K; ++k) {
          images.data()[k * J + pix] += w * sinograms.data()[k * L + ray];
        }
      });
    }
  }
  return images;
}

}  // namespace serial

}  // namespace smdk

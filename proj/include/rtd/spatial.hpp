#pragma once

// Nearest-neighbour and radius queries over planar point clouds, plus the
// resolution-h deduplication used when clouds are assembled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <boost/iterator/function_output_iterator.hpp>

#include "rtd/common.hpp"

namespace rtd {

class PointIndex {
  using point = boost::geometry::model::point<double, 2, boost::geometry::cs::cartesian>;
  using box = boost::geometry::model::box<point>;
  using value = std::pair<point, std::uint32_t>;
  using tree = boost::geometry::index::rtree<value, boost::geometry::index::rstar<16>>;

 public:
  PointIndex() = default;

  explicit PointIndex(std::span<const cplx> pts) {
    std::vector<value> vals;
    vals.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      vals.emplace_back(point(pts[i].real(), pts[i].imag()), std::uint32_t(i));
    }
    tree_ = tree(vals.begin(), vals.end());
  }

  std::size_t size() const { return tree_.size(); }
  bool empty() const { return tree_.empty(); }

  std::size_t nearest(cplx z) const {
    require(!tree_.empty(), errc::empty_cloud, "nearest query on empty index");
    std::uint32_t best = 0;
    tree_.query(boost::geometry::index::nearest(point(z.real(), z.imag()), 1),
                boost::make_function_output_iterator([&](const value& v) { best = v.second; }));
    return best;
  }

  // Indices of all points with |p - z| <= r, ascending.
  void within(cplx z, double r, std::vector<std::size_t>& out) const {
    out.clear();
    box b(point(z.real() - r, z.imag() - r), point(z.real() + r, z.imag() + r));
    const double r2 = r * r;
    tree_.query(boost::geometry::index::intersects(b),
                boost::make_function_output_iterator([&](const value& v) {
                  double dx = v.first.get<0>() - z.real();
                  double dy = v.first.get<1>() - z.imag();
                  if (dx * dx + dy * dy <= r2) out.push_back(v.second);
                }));
    std::sort(out.begin(), out.end());
  }

 private:
  tree tree_;
};

// Keeps the first point seen in each h-cell; the cell key is the rounded
// coordinate pair. Returns the representative index for every offered point.
class CellDeduper {
 public:
  explicit CellDeduper(double h) : h_(h) { require(h > 0, errc::precondition, "dedup resolution must be positive"); }

  // Returns {representative slot, inserted?}.
  std::pair<std::size_t, bool> offer(cplx z) {
    std::int64_t ix = std::llround(z.real() / h_);
    std::int64_t iy = std::llround(z.imag() / h_);
    std::uint64_t key = (static_cast<std::uint64_t>(ix) << 32) ^ (static_cast<std::uint64_t>(iy) & 0xffffffffULL);
    auto [it, inserted] = cells_.try_emplace(key, count_);
    if (inserted) ++count_;
    return {it->second, inserted};
  }

  std::size_t size() const { return count_; }

 private:
  double h_;
  std::size_t count_ = 0;
  std::unordered_map<std::uint64_t, std::size_t> cells_;
};

inline double hausdorff_distance(std::span<const cplx> a, std::span<const cplx> b) {
  require(!a.empty() && !b.empty(), errc::empty_cloud, "hausdorff distance of empty set");
  PointIndex ia(a), ib(b);
  double d = 0;
  for (cplx z : a) d = std::max(d, std::abs(z - b[ib.nearest(z)]));
  for (cplx z : b) d = std::max(d, std::abs(z - a[ia.nearest(z)]));
  return d;
}

}  // namespace rtd

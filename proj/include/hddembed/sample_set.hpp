#pragma once

#include <span>

#include "hddembed/errors.hpp"
#include "hddembed/types.hpp"

namespace hddembed {

/// n draws in [0, 1]^dim, one point per row.
class SampleSet {
 public:
  SampleSet() = default;

  explicit SampleSet(RowMatrix points) : points_(std::move(points)) {
    detail::require(points_.rows() >= 1, "SampleSet: at least one point is required");
    detail::require(points_.cols() >= 1, "SampleSet: dimension must be >= 1");
    for (Eigen::Index i = 0; i < points_.size(); ++i) {
      double v = points_.data()[i];
      detail::require(v >= 0.0 && v <= 1.0, "SampleSet: coordinates must lie in [0, 1]");
    }
  }

  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }
  const RowMatrix& points() const noexcept { return points_; }

  std::span<const double> row(Eigen::Index i) const {
    return {points_.data() + i * points_.cols(), static_cast<std::size_t>(points_.cols())};
  }

  /// Rows [begin, end) as a new sample set.
  SampleSet slice(Eigen::Index begin, Eigen::Index end) const {
    detail::require(begin >= 0 && end <= size() && begin < end, "SampleSet::slice: bad range");
    return SampleSet(RowMatrix(points_.middleRows(begin, end - begin)));
  }

 private:
  RowMatrix points_;
};

}  // namespace hddembed

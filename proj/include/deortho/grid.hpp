#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "deortho/errors.hpp"

namespace deortho {

using cplx = std::complex<double>;
using RealArray = Eigen::VectorXd;
using ComplexArray = Eigen::VectorXcd;
/// Per-grid-point validity flags (1 = valid).
using Mask = std::vector<std::uint8_t>;

/// Uniform, origin-centred nuclear grid. Lengths are in units of sigma.
struct GridSpec {
  Eigen::Index n_points = 1201;
  double dR = 0.025;

  double position(Eigen::Index i) const {
    return (static_cast<double>(i) - 0.5 * static_cast<double>(n_points - 1)) * dR;
  }
  double half_extent() const { return 0.5 * static_cast<double>(n_points - 1) * dR; }
  Eigen::Index centre_index() const { return (n_points - 1) / 2; }

  RealArray positions() const {
    RealArray r(n_points);
    for (Eigen::Index i = 0; i < n_points; ++i) r[i] = position(i);
    return r;
  }

  /// Odd point count keeps R = 0 on the grid. Runs require at least three points;
  /// single-site grids are allowed for operator tests.
  void validate(Eigen::Index min_points = 3) const {
    if (n_points < min_points)
      throw InvalidArgument("grid.n_points must be >= " + std::to_string(min_points));
    if (n_points % 2 == 0) throw InvalidArgument("grid.n_points must be odd");
    if (!(dR > 0.0)) throw InvalidArgument("grid.dR must be positive");
  }
};

inline bool same_grid(const GridSpec& a, const GridSpec& b) {
  return a.n_points == b.n_points && a.dR == b.dR;
}

/// Sum of f over the grid times dR.
inline double integrate(const RealArray& f, const GridSpec& grid) { return f.sum() * grid.dR; }
inline cplx integrate(const ComplexArray& f, const GridSpec& grid) { return f.sum() * grid.dR; }

} // namespace deortho

// Common numeric aliases used across the toolkit.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>

namespace mcasim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bitmask over substation indices (bit k set <=> substation k is in the set).
using SubsetMask = std::uint64_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace mcasim

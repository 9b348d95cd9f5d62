#pragma once

#include <Eigen/Core>

namespace gcfem {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

}  // namespace gcfem

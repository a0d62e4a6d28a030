#pragma once

#include <Eigen/Core>

namespace dgpsi {

/// true = observed
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using BoolVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

}  // namespace dgpsi

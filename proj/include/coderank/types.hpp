#pragma once

#include <Eigen/Core>
#include <string>

namespace coderank {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

using LabelId = std::string;

}  // namespace coderank

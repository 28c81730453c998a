#pragma once

#include <Eigen/Core>

#include "qtt/dense_tensor.hpp"

namespace qtt::detail {

using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;

inline ConstMatrixMap view(const DenseMatrix& m) {
    return ConstMatrixMap(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                          static_cast<Eigen::Index>(m.cols()));
}

inline MatrixMap view(DenseMatrix& m) {
    return MatrixMap(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                     static_cast<Eigen::Index>(m.cols()));
}

inline DenseMatrix to_dense(const Eigen::MatrixXd& m) {
    return DenseMatrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                       std::vector<double>(m.data(), m.data() + m.size()));
}

}  // namespace qtt::detail

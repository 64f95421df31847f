#pragma once

#include <Eigen/Dense>

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        return 1e300;
    }
    return (a - b).cwiseAbs().maxCoeff();
}

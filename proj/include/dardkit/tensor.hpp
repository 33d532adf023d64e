#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dardkit {

/// Row-major dense matrix. Batches are stored one sample per row, with image
/// samples flattened in channel-planar (C, H, W) order.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Per-sample input shape, e.g. {32} or {3, 32, 32}.
using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

/// Argmax of a row, ties resolved toward the smallest index.
template <typename Row>
int argmax_row(const Row& row) {
    int best = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j) {
        if (row(j) > row(best)) {
            best = static_cast<int>(j);
        }
    }
    return best;
}

template <typename Row>
int argmin_row(const Row& row) {
    int best = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j) {
        if (row(j) < row(best)) {
            best = static_cast<int>(j);
        }
    }
    return best;
}

inline std::vector<int> predictions(const Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = argmax_row(logits.row(i));
    }
    return out;
}

/// sign with sign(0) == 0.
inline double sign0(double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

}  // namespace dardkit

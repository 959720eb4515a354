#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace setgen {

// Row-major semantics throughout: rows index tokens/samples, columns index
// features. Eigen's internal storage order is irrelevant to callers; all
// serialization is explicit row-by-row.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using Row = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename S>
using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;

struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

struct config_error : error {
    explicit config_error(const std::string& msg) : error(msg) {}
};

struct io_error : error {
    explicit io_error(const std::string& msg) : error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw error(msg);
}

template <typename E>
void require(bool cond, const std::string& msg) {
    if (!cond) throw E(msg);
}

template <typename S>
bool all_finite(const Mat<S>& m) {
    return m.allFinite();
}

}  // namespace setgen

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "setgen/core/common.hpp"

// Test-only plumbing: golden matrix files under tests/golden. A golden is
// written when SETGEN_WRITE_GOLDEN=1 and the asserting test then fails with a
// note, so freshly generated goldens are always inspected before they count.

namespace testutil {

inline std::filesystem::path golden_dir() {
    return std::filesystem::path(__FILE__).parent_path() / "golden";
}

inline std::filesystem::path golden_path(const std::string& name) {
    return golden_dir() / (name + ".txt");
}

inline bool write_golden_mode() {
    const char* v = std::getenv("SETGEN_WRITE_GOLDEN");
    return v && std::string(v) == "1";
}

inline void write_matrix(const std::filesystem::path& p, const setgen::Mat<double>& m) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p);
    f.precision(17);
    f << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) f << " ";
            f << m(i, j);
        }
        f << "\n";
    }
}

inline setgen::Mat<double> read_matrix(const std::filesystem::path& p) {
    std::ifstream f(p);
    setgen::require<setgen::io_error>(f.good(), "missing golden file " + p.string() +
                                                    " (set SETGEN_WRITE_GOLDEN=1 to generate)");
    Eigen::Index rows = 0, cols = 0;
    f >> rows >> cols;
    setgen::Mat<double> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) f >> m(i, j);
    setgen::require<setgen::io_error>(!f.fail(), "truncated golden file " + p.string());
    return m;
}

// Returns max abs deviation from the stored golden; writes the golden first
// in write mode.
inline double golden_diff(const std::string& name, const setgen::Mat<double>& actual) {
    const auto p = golden_path(name);
    if (write_golden_mode()) write_matrix(p, actual);
    const auto expected = read_matrix(p);
    setgen::require(expected.rows() == actual.rows() && expected.cols() == actual.cols(),
                    "golden shape mismatch for " + name);
    return (expected - actual).cwiseAbs().maxCoeff();
}

}  // namespace testutil

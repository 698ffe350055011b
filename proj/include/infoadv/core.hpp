#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace infoadv {

/// Dense row-major matrix used for every value in the library.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed, missing or inconsistent dataset files.
class DataError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced during a computation, or a loss diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Shape mismatch or a violated precondition on an argument.
class ShapeError : public Error {
public:
    using Error::Error;
};

inline std::string shape_str(const Mat& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

/// FNV-1a over the raw bytes of a matrix; used to detect parameter changes.
inline std::uint64_t hash_matrix(const Mat& m, std::uint64_t h = 1469598103934665603ULL) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const auto n = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace infoadv

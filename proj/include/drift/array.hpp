#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace drift {

// Thrown for every structured library error (shape mismatch, bad config,
// non-finite values, parse failures). The C API maps it to an error code
// plus a retrievable message.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major array of 64-bit floats. Rank 1 or 2 is all we need.
struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Array() = default;
    Array(std::vector<std::size_t> shp, std::vector<double> values);

    static Array zeros(std::vector<std::size_t> shape);
    static Array full(std::vector<std::size_t> shape, double value);
    static Array scalar(double value);

    std::size_t size() const { return data.size(); }
    // Rank-2 views; a rank-1 array of length n counts as 1 x n.
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Array& other) const { return shape == other.shape; }
    std::string shape_str() const;

    // Throws Error naming `context` if any entry is NaN/Inf.
    void check_finite(const std::string& context) const;
};

bool all_finite(const Array& a);

}  // namespace drift

#include "drift/array.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace drift {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}
}  // namespace

Array::Array(std::vector<std::size_t> shp, std::vector<double> values)
    : shape(std::move(shp)), data(std::move(values)) {
    if (product(shape) != data.size()) {
        throw Error("Array: shape " + shape_str() + " does not match data length " +
                    std::to_string(data.size()));
    }
}

Array Array::zeros(std::vector<std::size_t> shape) {
    Array a;
    a.data.assign(product(shape), 0.0);
    a.shape = std::move(shape);
    return a;
}

Array Array::full(std::vector<std::size_t> shape, double value) {
    Array a;
    a.data.assign(product(shape), value);
    a.shape = std::move(shape);
    return a;
}

Array Array::scalar(double value) { return Array({1}, {value}); }

std::size_t Array::rows() const {
    if (shape.size() >= 2) return shape[0];
    return 1;
}

std::size_t Array::cols() const {
    if (shape.size() >= 2) return shape[1];
    return shape.empty() ? 0 : shape[0];
}

std::string Array::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void Array::check_finite(const std::string& context) const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw Error("non-finite value in " + context);
        }
    }
}

bool all_finite(const Array& a) {
    for (double v : a.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace drift

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "get/common.hpp"
#include "get/rng.hpp"

namespace get {

// Dense row-major tensor of doubles. 64-bit throughout: at this scale the
// tight gradient checks matter more than speed.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static std::int64_t count(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (std::int64_t d : shape) {
            if (d < 0) throw ShapeError("negative tensor extent");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<std::int64_t> shape) {
        Tensor t;
        t.data.assign(static_cast<std::size_t>(count(shape)), 0.0);
        t.shape = std::move(shape);
        return t;
    }

    static Tensor full(std::vector<std::int64_t> shape, double value) {
        Tensor t = zeros(std::move(shape));
        for (double& v : t.data) v = value;
        return t;
    }

    static Tensor scalar(double value) { return full({}, value); }

    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values) {
        if (count(shape) != static_cast<std::int64_t>(values.size()))
            throw ShapeError("value count does not match shape");
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::move(values);
        return t;
    }

    static Tensor gaussian(std::vector<std::int64_t> shape, double stddev, SplitRng& rng) {
        Tensor t = zeros(std::move(shape));
        for (double& v : t.data) v = stddev * rng.gaussian();
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    std::int64_t dim(std::int64_t axis) const {
        if (axis < 0) axis += rank();
        return shape[static_cast<std::size_t>(axis)];
    }

    double& at(std::int64_t flat) { return data[static_cast<std::size_t>(flat)]; }
    double at(std::int64_t flat) const { return data[static_cast<std::size_t>(flat)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << 'x';
            os << shape[i];
        }
        os << ']';
        return os.str();
    }
};

inline std::vector<std::int64_t> row_major_strides(const std::vector<std::int64_t>& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;)
        strides[i - 1] = strides[i] * shape[i];
    return strides;
}

}  // namespace get

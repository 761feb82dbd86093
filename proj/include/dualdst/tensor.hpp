#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualdst {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteValue : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor, double precision throughout.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(size_t(count(shape)), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != size_t(count(shape))) throw ShapeMismatch("tensor data/shape disagree");
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int64_t size() const { return int64_t(data.size()); }
    bool is_scalar() const { return data.size() == 1; }

    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(int i) { return data[size_t(i)]; }
    double at(int i) const { return data[size_t(i)]; }
    double& at(int r, int c) { return data[size_t(r) * size_t(cols()) + size_t(c)]; }
    double at(int r, int c) const { return data[size_t(r) * size_t(cols()) + size_t(c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

}  // namespace dualdst

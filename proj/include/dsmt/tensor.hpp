#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "dsmt/common.hpp"

namespace dsmt {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (std::size_t e : shape_) {
            if (e == 0) throw ContractError("Tensor: zero extent in shape " + shape_str(shape_));
            n *= e;
        }
        data_.assign(n, fill);
    }

    static Tensor scalar(double v) {
        Tensor t(Shape{1});
        t.data_[0] = v;
        return t;
    }

    static Tensor from(Shape shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        std::size_t n = 1;
        for (std::size_t e : t.shape_) n *= e;
        if (n != values.size())
            throw ContractError("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(t.shape_));
        t.data_ = std::move(values);
        return t;
    }

    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    const Shape& shape() const { return shape_; }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double scalar_value() const {
        if (size() != 1) throw ContractError("scalar_value: tensor has shape " + shape_str(shape_));
        return data_[0];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace dsmt

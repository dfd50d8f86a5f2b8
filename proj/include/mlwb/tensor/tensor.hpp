#pragma once

#include <cstddef>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlwb/tensor/errors.hpp"

namespace mlwb {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

inline std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += std::to_string(shape[i]);
    }
    out += "]";
    return out;
}

/// Shaped, row-major array. Rank 0 is a scalar holding one element.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() : data_(1, T{0}) {}

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        for (std::size_t d : shape_) {
            if (d == 0) {
                throw ShapeError("tensor shape " + to_string(shape_) + " has a zero dimension");
            }
        }
        if (data_.size() != element_count(shape_)) {
            throw ShapeError("tensor shape " + to_string(shape_) + " needs " +
                             std::to_string(element_count(shape_)) + " elements, got " +
                             std::to_string(data_.size()));
        }
    }

    static BasicTensor zeros(Shape shape) { return filled(std::move(shape), T{0}); }

    static BasicTensor filled(Shape shape, T value) {
        const std::size_t n = element_count(shape);
        return BasicTensor(std::move(shape), std::vector<T>(n, value));
    }

    static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T operator[](std::size_t i) const { return data_[i]; }
    T& operator[](std::size_t i) { return data_[i]; }

    T item() const {
        if (data_.size() != 1) {
            throw ShapeError("item() on tensor of shape " + to_string(shape_));
        }
        return data_[0];
    }

    BasicTensor reshaped(Shape shape) const {
        if (element_count(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        }
        return BasicTensor(std::move(shape), data_);
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool operator==(const BasicTensor&) const = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Same shape and identical bit patterns (distinguishes -0 from +0, compares NaN payloads).
template <typename T>
bool bit_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

}  // namespace mlwb

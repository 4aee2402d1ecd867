#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "acnn/errors.hpp"

namespace acnn {

// Dense shape of rank 0..4, row-major layout.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        if (dims.size() > 4) throw std::invalid_argument("Shape: rank > 4");
        for (int d : dims) {
            if (d <= 0) throw std::invalid_argument("Shape: non-positive dim");
            dims_[rank_++] = d;
        }
    }

    int rank() const { return rank_; }
    int operator[](int i) const { return dims_[i]; }
    long long numel() const {
        long long n = 1;
        for (int i = 0; i < rank_; ++i) n *= dims_[i];
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (dims_[i] != o.dims_[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank_; ++i) {
            if (i) s += ",";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

private:
    int dims_[4] = {0, 0, 0, 0};
    int rank_ = 0;
};

// Dense n-d array (rank <= 4). Carries images, feature maps, filters and
// gradients alike. T is float for training, double for gradient checks.
template <typename T>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(Shape shape, T fill = T(0))
        : shape_(shape), data_(static_cast<size_t>(shape.numel()), fill) {}

    static TensorT zeros(Shape shape) { return TensorT(shape, T(0)); }

    const Shape& shape() const { return shape_; }
    int rank() const { return shape_.rank(); }
    int dim(int i) const { return shape_[i]; }
    long long numel() const { return static_cast<long long>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](long long i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](long long i) const { return data_[static_cast<size_t>(i)]; }

    T& at(int a) { return data_[static_cast<size_t>(a)]; }
    const T& at(int a) const { return data_[static_cast<size_t>(a)]; }
    T& at(int a, int b) { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
    const T& at(int a, int b) const { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
    T& at(int a, int b, int c) {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }
    const T& at(int a, int b, int c) const {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }
    T& at(int a, int b, int c, int d) {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const T& at(int a, int b, int c, int d) const {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    TensorT reshaped(Shape s) const {
        if (s.numel() != numel())
            throw std::invalid_argument("reshape: element count mismatch " + shape_.str() +
                                        " -> " + s.str());
        TensorT out = *this;
        out.shape_ = s;
        return out;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_);
        for (long long i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const TensorT& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_;
    std::vector<T> data_;

    template <typename U>
    friend class TensorT;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
void require_finite(const TensorT<T>& t, const char* where) {
    if (!t.all_finite()) throw NumericError(std::string(where) + ": non-finite values");
}

}  // namespace acnn

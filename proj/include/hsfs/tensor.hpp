#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsfs {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using ArrX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_numel(const Shape& s) {
    Eigen::Index n = 1;
    for (Eigen::Index d : s) n *= d;
    return s.empty() ? 0 : n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

/// Dense n-d array of Scalar, flat row-major storage. Rank 2 is a sample
/// batch (rows x features), rank 4 is an image batch (n, h, w, c).
template <typename Scalar>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.setZero(shape_numel(shape_));
    }

    TensorT(Shape shape, ArrX<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != shape_numel(shape_))
            throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape_));
    }

    TensorT(std::initializer_list<Eigen::Index> shape) : TensorT(Shape(shape)) {}

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    Eigen::Index dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    Eigen::Index size() const { return data_.size(); }

    ArrX<Scalar>& array() { return data_; }
    const ArrX<Scalar>& array() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](Eigen::Index i) { return data_[i]; }
    Scalar operator[](Eigen::Index i) const { return data_[i]; }

    // rank-2 view
    Eigen::Map<RowMat<Scalar>> matrix() {
        require_rank(2);
        return {data_.data(), shape_[0], shape_[1]};
    }
    Eigen::Map<const RowMat<Scalar>> matrix() const {
        require_rank(2);
        return {data_.data(), shape_[0], shape_[1]};
    }

    // arbitrary 2-d view over the flat storage
    Eigen::Map<RowMat<Scalar>> reshaped(Eigen::Index rows, Eigen::Index cols) {
        if (rows * cols != data_.size())
            throw std::invalid_argument("reshape size mismatch for tensor " + shape_str(shape_));
        return {data_.data(), rows, cols};
    }
    Eigen::Map<const RowMat<Scalar>> reshaped(Eigen::Index rows, Eigen::Index cols) const {
        if (rows * cols != data_.size())
            throw std::invalid_argument("reshape size mismatch for tensor " + shape_str(shape_));
        return {data_.data(), rows, cols};
    }

    bool all_finite() const { return data_.allFinite(); }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    template <typename T>
    TensorT<T> cast() const {
        return TensorT<T>(shape_, data_.template cast<T>());
    }

private:
    void require_rank(int r) const {
        if (rank() != r)
            throw std::invalid_argument("expected rank-" + std::to_string(r) + " tensor, got " +
                                        shape_str(shape_));
    }
    void validate_shape() const {
        for (Eigen::Index d : shape_)
            if (d <= 0) throw std::invalid_argument("non-positive tensor dim in " + shape_str(shape_));
    }

    Shape shape_;
    ArrX<Scalar> data_;
};

using Tensor = TensorT<float>;

}  // namespace hsfs

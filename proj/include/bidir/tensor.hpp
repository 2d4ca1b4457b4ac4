#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bidir/errors.hpp"

namespace bidir {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline Index shape_count(const Shape& s) {
    Index n = 1;
    for (Index d : s) n *= d;
    return n;
}

/// Dense n-dimensional array of real values. Data is a flat Eigen array in
/// row-major order (last dimension fastest); rank-2 tensors expose an Eigen
/// matrix view so all heavy math stays inside Eigen expressions.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape();
        data_.setZero(shape_count(shape_));
    }

    Tensor(Shape shape, ArrayX<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (shape_count(shape_) != data_.size())
            throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match buffer of " +
                             std::to_string(data_.size()) + " values");
    }

    /// Rank-2 tensor from nested braced lists (rows of equal length).
    Tensor(std::initializer_list<std::initializer_list<Scalar>> rows) {
        const Index r = Index(rows.size());
        const Index c = r ? Index(rows.begin()->size()) : 0;
        shape_ = {r, c};
        data_.resize(r * c);
        Index i = 0;
        for (const auto& row : rows) {
            if (Index(row.size()) != c) throw ShapeError("tensor: ragged initializer rows");
            for (Scalar v : row) data_[i++] = v;
        }
    }

    /// Rank-1 tensor from a braced list (named to avoid clashing with shapes).
    static Tensor vec(std::initializer_list<Scalar> values) {
        Tensor t({Index(values.size())});
        Index i = 0;
        for (Scalar v : values) t.data_[i++] = v;
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, Scalar value) {
        Tensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    static Tensor identity(Index n) {
        Tensor t({n, n});
        for (Index i = 0; i < n; ++i) t.data_[i * n + i] = Scalar(1);
        return t;
    }

    const Shape& shape() const { return shape_; }
    Index rank() const { return Index(shape_.size()); }
    Index size() const { return data_.size(); }
    Index dim(Index axis) const { return shape_.at(size_t(axis)); }
    bool empty() const { return data_.size() == 0; }

    ArrayX<Scalar>& array() { return data_; }
    const ArrayX<Scalar>& array() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    Scalar& operator()(Index i, Index j) {
        require_rank(2, "operator()");
        return data_[i * shape_[1] + j];
    }
    Scalar operator()(Index i, Index j) const {
        require_rank(2, "operator()");
        return data_[i * shape_[1] + j];
    }

    /// Rank-2 matrix view over the flat storage.
    MatrixMap<Scalar> mat() {
        require_rank(2, "mat");
        return MatrixMap<Scalar>(data_.data(), shape_[0], shape_[1]);
    }
    ConstMatrixMap<Scalar> mat() const {
        require_rank(2, "mat");
        return ConstMatrixMap<Scalar>(data_.data(), shape_[0], shape_[1]);
    }

    /// Any-rank tensor viewed as a matrix with the leading axis as rows.
    MatrixMap<Scalar> rows_view() {
        if (rank() < 1) throw ShapeError("rows_view: rank-0 tensor");
        return MatrixMap<Scalar>(data_.data(), shape_[0], size() / std::max<Index>(shape_[0], 1));
    }
    ConstMatrixMap<Scalar> rows_view() const {
        if (rank() < 1) throw ShapeError("rows_view: rank-0 tensor");
        return ConstMatrixMap<Scalar>(data_.data(), shape_[0], size() / std::max<Index>(shape_[0], 1));
    }

    /// Same storage, new shape; element count must match.
    Tensor reshaped(Shape shape) const {
        if (shape_count(shape) != size())
            throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape) +
                             " changes element count");
        return Tensor(std::move(shape), data_);
    }

    void require_rank(Index r, const char* op) const {
        if (rank() != r)
            throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(r) +
                             " tensor, got shape " + shape_str(shape_));
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const { return data_.isFinite().all(); }

    template <typename Other>
    Tensor<Other> cast() const {
        return Tensor<Other>(shape_, data_.template cast<Other>());
    }

private:
    void check_shape() const {
        for (Index d : shape_)
            if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape_));
    }

    Shape shape_;
    ArrayX<Scalar> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Throws NumericError naming `op` if the tensor holds NaN or Inf.
template <typename Scalar>
void ensure_finite(const Tensor<Scalar>& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": produced non-finite values");
}

template <typename Scalar>
void ensure_finite(Scalar v, const char* op) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced non-finite value");
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// ---------------------------------------------------------------------------
// Free functions: linear algebra
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    a.require_rank(2, "matmul");
    b.require_rank(2, "matmul");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tensor<Scalar> out({a.dim(0), b.dim(1)});
    out.mat().noalias() = a.mat() * b.mat();
    ensure_finite(out, "matmul");
    return out;
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
    a.require_rank(2, "transpose");
    Tensor<Scalar> out({a.dim(1), a.dim(0)});
    out.mat() = a.mat().transpose();
    return out;
}

template <typename Scalar>
Scalar dot(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_shape(a, b, "dot");
    return (a.array() * b.array()).sum();
}

// ---------------------------------------------------------------------------
// Free functions: elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_shape(a, b, "add");
    return Tensor<Scalar>(a.shape(), a.array() + b.array());
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_shape(a, b, "sub");
    return Tensor<Scalar>(a.shape(), a.array() - b.array());
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_shape(a, b, "mul");
    return Tensor<Scalar>(a.shape(), a.array() * b.array());
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar s) {
    return Tensor<Scalar>(a.shape(), a.array() + s);
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
    return Tensor<Scalar>(a.shape(), a.array() * s);
}

template <typename Scalar>
Tensor<Scalar> max_with_scalar(const Tensor<Scalar>& a, Scalar floor) {
    return Tensor<Scalar>(a.shape(), a.array().max(floor));
}

template <typename Scalar>
Tensor<Scalar> clip(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
    if (!(lo <= hi)) throw ValueError("clip: lo > hi");
    return Tensor<Scalar>(a.shape(), a.array().max(lo).min(hi));
}

template <typename Scalar>
Tensor<Scalar> sign(const Tensor<Scalar>& a) {
    return Tensor<Scalar>(a.shape(), a.array().unaryExpr([](Scalar v) {
        return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
    }));
}

// ---------------------------------------------------------------------------
// Free functions: reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar sum(const Tensor<Scalar>& a) {
    return a.array().sum();
}

template <typename Scalar>
Scalar max(const Tensor<Scalar>& a) {
    if (a.empty()) throw ValueError("max: empty tensor");
    return a.array().maxCoeff();
}

/// Flat argmax; ties break toward the lowest index so metrics are deterministic.
template <typename Scalar>
Index argmax(const Tensor<Scalar>& a) {
    if (a.empty()) throw ValueError("argmax: empty tensor");
    Index best = 0;
    for (Index i = 1; i < a.size(); ++i)
        if (a[i] > a[best]) best = i;
    return best;
}

namespace detail {
template <typename Scalar>
void require_axis(const Tensor<Scalar>& a, Index axis, const char* op) {
    a.require_rank(2, op);
    if (axis != 0 && axis != 1) throw ValueError(std::string(op) + ": axis out of range");
}
}  // namespace detail

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a, Index axis) {
    detail::require_axis(a, axis, "sum");
    if (axis == 0) {
        Tensor<Scalar> out({a.dim(1)});
        MatrixMap<Scalar>(out.data(), 1, a.dim(1)) = a.mat().colwise().sum();
        return out;
    }
    Tensor<Scalar> out({a.dim(0)});
    MatrixMap<Scalar>(out.data(), a.dim(0), 1) = a.mat().rowwise().sum();
    return out;
}

template <typename Scalar>
Tensor<Scalar> max(const Tensor<Scalar>& a, Index axis) {
    detail::require_axis(a, axis, "max");
    if (axis == 0) {
        Tensor<Scalar> out({a.dim(1)});
        MatrixMap<Scalar>(out.data(), 1, a.dim(1)) = a.mat().colwise().maxCoeff();
        return out;
    }
    Tensor<Scalar> out({a.dim(0)});
    MatrixMap<Scalar>(out.data(), a.dim(0), 1) = a.mat().rowwise().maxCoeff();
    return out;
}

/// Per-row argmax of a rank-2 tensor, lowest index on ties.
template <typename Scalar>
std::vector<Index> argmax_rows(const Tensor<Scalar>& a) {
    a.require_rank(2, "argmax_rows");
    if (a.dim(1) == 0) throw ValueError("argmax_rows: empty rows");
    std::vector<Index> out(size_t(a.dim(0)));
    for (Index r = 0; r < a.dim(0); ++r) {
        Index best = 0;
        for (Index c = 1; c < a.dim(1); ++c)
            if (a(r, c) > a(r, best)) best = c;
        out[size_t(r)] = best;
    }
    return out;
}

template <typename Scalar>
bool approx_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Scalar tol) {
    return a.same_shape(b) && ((a.array() - b.array()).abs() <= tol).all();
}

}  // namespace bidir

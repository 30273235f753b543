#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "matrix_trader/common.hpp"

namespace mtrader::nets {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Dense row-major array.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape)) throw ShapeError("tensor data does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

// C = alpha * op(A) * op(B) + beta * C with beta in {0, 1}; all row-major.
// op(A) is M x K, op(B) is K x N.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          const T* b, T beta, T* c) {
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const RowMat>;
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMat> cm(c, M, N);
  if (beta == T(0)) cm.setZero();
  const ConstMap am(a, trans_a ? K : M, trans_a ? M : K);
  const ConstMap bm(b, trans_b ? N : K, trans_b ? K : N);
  if (!trans_a && !trans_b) cm.noalias() += alpha * (am * bm);
  else if (trans_a && !trans_b) cm.noalias() += alpha * (am.transpose() * bm);
  else if (!trans_a && trans_b) cm.noalias() += alpha * (am * bm.transpose());
  else cm.noalias() += alpha * (am.transpose() * bm.transpose());
}

}  // namespace detail
}  // namespace mtrader::nets

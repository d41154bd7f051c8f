#include "colornorm/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "colornorm/error.hpp"

namespace colornorm {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void validate_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) fail(ErrorCode::InvalidArgument, "tensor dimension of size 0 in shape " + to_string(shape));
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor() : data_(1, T{0}) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_product(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_product(shape_)) {
    fail(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + to_string(shape_));
  }
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + ": " + to_string(a) + " vs " + to_string(b));
  }
}

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, ElementwiseOp op) {
  require_same_shape(a.shape(), b.shape(), "elementwise operands");
  BasicTensor<T> out(a.shape());
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::Add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::Sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case ElementwiseOp::Mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template Tensor elementwise(const Tensor&, const Tensor&, ElementwiseOp);
template TensorD elementwise(const TensorD&, const TensorD&, ElementwiseOp);

}  // namespace colornorm

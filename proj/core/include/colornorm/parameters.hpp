#pragma once

#include <string>
#include <vector>

#include "colornorm/tensor.hpp"

namespace colornorm {

/// Non-owning handle to one trainable tensor inside a model.
template <typename T>
struct ParamRef {
  std::string name;
  BasicTensor<T>* value = nullptr;
};

/// One gradient per trainable parameter, in the model's parameter order.
template <typename T>
struct Gradients {
  std::vector<std::string> names;
  std::vector<BasicTensor<T>> tensors;
};

}  // namespace colornorm

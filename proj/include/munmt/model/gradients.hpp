#pragma once

#include <functional>

#include "munmt/model/model.hpp"

namespace munmt::nn {

// A scalar objective built on a tape through the binder; must return a 1x1 Var.
template <class T>
using LossFn = std::function<ad::Var(Binder<T>&)>;

template <class T>
struct GradientResult {
  T loss = 0;
  Gradients<T> grads;
};

// Exact reverse-mode derivatives of loss with respect to every parameter.
// Parameters the loss never touches get exactly zero. Throws
// std::domain_error("non-finite loss") when the loss is NaN or infinite.
template <class T>
GradientResult<T> gradients(const Model<T>& model, const LossFn<T>& loss);

template <class T>
bool all_finite(const Gradients<T>& grads);

// Elementwise a += b.
template <class T>
void accumulate(Gradients<T>& a, const Gradients<T>& b);

}  // namespace munmt::nn

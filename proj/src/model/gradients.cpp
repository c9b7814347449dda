#include "munmt/model/gradients.hpp"

#include <cmath>
#include <stdexcept>

namespace munmt::nn {

template <class T>
GradientResult<T> gradients(const Model<T>& model, const LossFn<T>& loss) {
  GradientResult<T> out;
  out.grads = model.zero_gradients();
  ad::Tape<T> tape;
  Binder<T> bind(tape, model, &out.grads);
  const ad::Var l = loss(bind);
  out.loss = tape.value(l)(0, 0);
  if (!std::isfinite(out.loss)) throw std::domain_error("non-finite loss");
  tape.backward(l);
  return out;
}

template <class T>
bool all_finite(const Gradients<T>& grads) {
  for (const auto& g : grads) {
    if (!g.allFinite()) return false;
  }
  return true;
}

template <class T>
void accumulate(Gradients<T>& a, const Gradients<T>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("gradient sets differ in size");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template GradientResult<float> gradients<float>(const Model<float>&, const LossFn<float>&);
template GradientResult<double> gradients<double>(const Model<double>&, const LossFn<double>&);
template bool all_finite<float>(const Gradients<float>&);
template bool all_finite<double>(const Gradients<double>&);
template void accumulate<float>(Gradients<float>&, const Gradients<float>&);
template void accumulate<double>(Gradients<double>&, const Gradients<double>&);

}  // namespace munmt::nn

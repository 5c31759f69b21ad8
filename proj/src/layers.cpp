#include "gridad/layers.hpp"

#include <cmath>

namespace gridad {

namespace {
template <typename T>
void fill_uniform(Tensor<T>& t, double bound, Rng& rng) {
    for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
}
}  // namespace

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng)
    : weight(name + ".weight", Tensor<T>({out, in, kernel, kernel})), bias(name + ".bias", Tensor<T>({out})) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
    fill_uniform(weight.value, bound, rng);
    fill_uniform(bias.value, bound, rng);
}

template <typename T>
Var<T> Conv2d<T>::operator()(const Var<T>& x) {
    auto& tape = *x.tape;
    return ops::conv2d(x, tape.param(weight), tape.param(bias));
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", Tensor<T>({out, in})), bias(name + ".bias", Tensor<T>({out})) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    fill_uniform(weight.value, bound, rng);
    fill_uniform(bias.value, bound, rng);
}

template <typename T>
Var<T> Linear<T>::operator()(const Var<T>& x) {
    auto& tape = *x.tape;
    return ops::affine(x, tape.param(weight), tape.param(bias));
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Linear<float>;
template struct Linear<double>;

}  // namespace gridad

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gridad/autodiff.hpp"
#include "gridad/ops.hpp"
#include "gridad/rng.hpp"

namespace gridad {

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

/// Convolution layer with PyTorch-style default init: weight and bias drawn
/// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
struct Conv2d {
    Parameter<T> weight;
    Parameter<T> bias;

    Conv2d() = default;
    Conv2d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng);

    Var<T> operator()(const Var<T>& x);
    void collect(ParamList<T>& out) { out.push_back(&weight), out.push_back(&bias); }
};

/// Fully connected layer, same init convention as Conv2d.
template <typename T>
struct Linear {
    Parameter<T> weight;
    Parameter<T> bias;

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

    Var<T> operator()(const Var<T>& x);
    void collect(ParamList<T>& out) { out.push_back(&weight), out.push_back(&bias); }
};

}  // namespace gridad

#include "gridad/tensor.hpp"

#include <cmath>
#include <sstream>

namespace gridad {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

template <typename T>
bool Tensor<T>::all_finite() const {
    for (T v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_shape(const Shape& actual, const Shape& expected, const char* what) {
    if (actual != expected) {
        throw ConfigError(std::string(what) + ": expected shape " + shape_string(expected) +
                          ", got " + shape_string(actual));
    }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace gridad

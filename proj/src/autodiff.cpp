#include "gridad/autodiff.hpp"

namespace gridad {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    if (!value.all_finite()) throw NumericalError("non-finite constant recorded on tape");
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
    nodes_.push_back(Node{p.value, {}, grad_enabled_ && p.learnable, &p, {}});
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::push(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward,
                     const char* op) {
    if (!value.all_finite()) {
        throw NumericalError(std::string("non-finite output from ") + op);
    }
    bool needs = false;
    for (const auto& in : inputs) {
        if (in.tape != this) throw std::logic_error(std::string(op) + ": input from another tape");
        needs = needs || nodes_.at(in.id).requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
    auto& node = nodes_.at(id);
    if (node.grad.empty() && !node.value.empty()) node.grad = Tensor<T>(node.value.shape());
    return node.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
    if (loss.tape != this || loss.id >= nodes_.size()) {
        throw std::logic_error("backward called without a recorded forward pass");
    }
    if (backward_done_) throw std::logic_error("backward called twice on the same tape");
    if (nodes_[loss.id].value.size() != 1) throw std::logic_error("backward requires a scalar loss");
    backward_done_ = true;
    if (!nodes_[loss.id].requires_grad) return;

    grad(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.requires_grad || node.grad.empty()) continue;
        if (node.backward) node.backward(*this, i);
    }
    for (auto& node : nodes_) {
        if (node.param == nullptr || node.grad.empty()) continue;
        auto& pg = node.param->grad;
        if (pg.shape() != node.grad.shape()) pg = Tensor<T>(node.value.shape());
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += node.grad[k];
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace gridad

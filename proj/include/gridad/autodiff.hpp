#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridad/tensor.hpp"

namespace gridad {

/// Optimizer group; grids and memories train with their own learning rate.
enum class ParamGroup { network, grid };

/// A learnable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool learnable = true;
    ParamGroup group = ParamGroup::network;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v, ParamGroup g = ParamGroup::network)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), group(g) {}

    void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] const Tensor<T>& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so a
/// reverse sweep is a valid topological order. References returned by
/// value() and grad() stay valid while the tape grows. Single-threaded.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    /// With grad_enabled = false no node requires a gradient (inference).
    explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Records a value that never receives a gradient.
    Var<T> constant(Tensor<T> value);
    /// Records a parameter leaf; backward() accumulates into param.grad.
    Var<T> param(Parameter<T>& p);
    /// Records an op result. The backward function reads grad(self) and adds
    /// into the gradients of its inputs. Rejects non-finite values.
    Var<T> push(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward,
                const char* op);

    [[nodiscard]] const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    [[nodiscard]] bool requires_grad(const Var<T>& v) const { return requires_grad(v.id); }
    /// Gradient buffer of a node, allocated (zeroed) on first use.
    Tensor<T>& grad(std::size_t id);
    [[nodiscard]] bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }

    /// Back-propagates from a scalar (single element) node.
    void backward(const Var<T>& loss);

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    void clear() {
        nodes_.clear();
        backward_done_ = false;
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        Parameter<T>* param = nullptr;
        BackwardFn backward;
    };
    std::deque<Node> nodes_;  // push_back keeps references to earlier values valid
    bool grad_enabled_ = true;
    bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    if (tape == nullptr) throw std::logic_error("variable is not attached to a tape");
    return tape->value(id);
}

/// Throws unless every var lives on the same tape; returns that tape.
template <typename T>
Tape<T>& same_tape(std::initializer_list<Var<T>> vars) {
    Tape<T>* t = nullptr;
    for (const auto& v : vars) {
        if (v.tape == nullptr) throw std::logic_error("variable is not attached to a tape");
        if (t != nullptr && t != v.tape) throw std::logic_error("variables live on different tapes");
        t = v.tape;
    }
    if (t == nullptr) throw std::logic_error("no variables given");
    return *t;
}

}  // namespace gridad

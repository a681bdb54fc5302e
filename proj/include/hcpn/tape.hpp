#pragma once

#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hcpn/tensor.hpp"

namespace hcpn {

// Reverse-mode differentiation record. One tape belongs to one training step
// (or one gradient check); it is not safe to record on it from several
// threads.
//
// Nodes are appended in execution order, which is a topological order by
// construction. Each node stores a backward closure that receives the
// gradient of its output and accumulates into the gradients of its inputs.
template <typename T>
class Tape {
 public:
    // grad_in[i] is null when input i is a constant (not on this tape).
    using BackwardFn = std::function<void(std::span<const T> grad_out, std::span<std::vector<T>*> grad_in)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a differentiable leaf holding `value`.
    Tensor<T> watch(const Tensor<T>& value, std::string name = {});

    // Attaches `result` to this tape as the output of `op`. Inputs that are not
    // on this tape are treated as constants.
    Tensor<T> record(std::string_view op, Tensor<T> result, std::initializer_list<const Tensor<T>*> inputs,
                     BackwardFn backward);
    Tensor<T> record(std::string_view op, Tensor<T> result, const std::vector<const Tensor<T>*>& inputs,
                     BackwardFn backward);

    void backward(const Tensor<T>& loss);

    // Gradient with respect to `t` after backward(); zeros if `t` did not
    // influence the loss.
    Tensor<T> grad(const Tensor<T>& t) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    std::string_view op_name(int node) const { return nodes_.at(node).op; }
    std::string_view scope_name(int node) const { return nodes_.at(node).scope; }

    // Raise CorruptStateError as soon as a recorded value is non-finite.
    void set_check_finite(bool on) noexcept { check_finite_ = on; }

    // Test hook: multiply the incoming gradient of every node recorded in
    // `scope` by `factor`, which corrupts that scope's backward rules.
    void inject_fault(std::string scope, T factor);

    class ScopeGuard {
     public:
        ScopeGuard(Tape* tape, std::string name);
        ~ScopeGuard();
        ScopeGuard(const ScopeGuard&) = delete;
        ScopeGuard& operator=(const ScopeGuard&) = delete;

     private:
        Tape* tape_;
        std::string previous_;
    };

    const std::string& current_scope() const noexcept { return scope_; }

 private:
    struct Node {
        std::string op;
        std::string scope;
        std::vector<int> inputs;
        std::size_t numel = 0;
        BackwardFn backward;
    };

    Tensor<T> attach(std::string_view op, Tensor<T> result, std::vector<int> inputs, BackwardFn backward);

    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
    std::string scope_;
    bool check_finite_ = false;
    std::optional<std::pair<std::string, T>> fault_;
};

// Opens a named scope on the tape of `t` (no-op for untaped tensors).
template <typename T>
class TapeScope {
 public:
    TapeScope(Tape<T>* tape, std::string name) {
        if (tape != nullptr) guard_.emplace(tape, std::move(name));
    }

 private:
    std::optional<typename Tape<T>::ScopeGuard> guard_;
};

// The tape shared by all taped tensors among `inputs`, or null if none is
// taped. Throws ContractError when tensors from different tapes are mixed.
template <typename T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs);
template <typename T>
Tape<T>* common_tape(const std::vector<const Tensor<T>*>& inputs);

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace hcpn

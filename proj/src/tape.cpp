#include "hcpn/tape.hpp"

#include <algorithm>

namespace hcpn {

template <typename T>
Tensor<T> Tape<T>::watch(const Tensor<T>& value, std::string name) {
    Tensor<T> t = value.detached();
    return attach(name.empty() ? "leaf" : "leaf:" + name, std::move(t), {}, nullptr);
}

template <typename T>
Tensor<T> Tape<T>::record(std::string_view op, Tensor<T> result, std::initializer_list<const Tensor<T>*> inputs,
                          BackwardFn backward) {
    return record(op, std::move(result), std::vector<const Tensor<T>*>(inputs), std::move(backward));
}

template <typename T>
Tensor<T> Tape<T>::record(std::string_view op, Tensor<T> result, const std::vector<const Tensor<T>*>& inputs,
                          BackwardFn backward) {
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Tensor<T>* in : inputs) ids.push_back(in != nullptr && in->tape_ == this ? in->node_ : -1);
    return attach(op, std::move(result), std::move(ids), std::move(backward));
}

template <typename T>
Tensor<T> Tape<T>::attach(std::string_view op, Tensor<T> result, std::vector<int> inputs, BackwardFn backward) {
    const int id = static_cast<int>(nodes_.size());
    if (check_finite_) {
        const std::size_t bad = result.first_non_finite();
        if (bad != result.numel()) {
            throw CorruptStateError("non-finite value at element " + std::to_string(bad) + " of node #" +
                                    std::to_string(id) + " (" + std::string(op) + ", scope '" + scope_ + "')");
        }
    }
    nodes_.push_back(Node{std::string(op), scope_, std::move(inputs), result.numel(), std::move(backward)});
    grads_.emplace_back();
    result.tape_ = this;
    result.node_ = id;
    return result;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (loss.tape_ != this) throw ContractError("backward() loss is not recorded on this tape");

    for (auto& g : grads_) g.clear();
    grads_[loss.node_].assign(1, T(1));

    std::vector<std::vector<T>*> grad_in;
    for (int id = loss.node_; id >= 0; --id) {
        Node& node = nodes_[id];
        if (!node.backward || grads_[id].empty()) continue;

        if (fault_ && node.scope == fault_->first) {
            for (T& g : grads_[id]) g *= fault_->second;
        }

        grad_in.clear();
        for (int in : node.inputs) {
            if (in < 0) {
                grad_in.push_back(nullptr);
                continue;
            }
            auto& buf = grads_[in];
            if (buf.empty()) buf.assign(nodes_[in].numel, T(0));
            grad_in.push_back(&buf);
        }
        node.backward(std::span<const T>(grads_[id]), std::span<std::vector<T>*>(grad_in));
    }
}

template <typename T>
Tensor<T> Tape<T>::grad(const Tensor<T>& t) const {
    if (t.tape_ != this) throw ContractError("grad() of a tensor that is not on this tape");
    const auto& g = grads_[t.node_];
    if (g.empty()) return Tensor<T>(t.shape());
    return Tensor<T>(t.shape(), g);
}

template <typename T>
void Tape<T>::inject_fault(std::string scope, T factor) {
    fault_.emplace(std::move(scope), factor);
}

template <typename T>
Tape<T>::ScopeGuard::ScopeGuard(Tape* tape, std::string name) : tape_(tape), previous_(tape->scope_) {
    tape_->scope_ = std::move(name);
}

template <typename T>
Tape<T>::ScopeGuard::~ScopeGuard() {
    tape_->scope_ = std::move(previous_);
}

template <typename T>
Tape<T>* common_tape(const std::vector<const Tensor<T>*>& inputs) {
    Tape<T>* tape = nullptr;
    for (const Tensor<T>* t : inputs) {
        if (t == nullptr || !t->on_tape()) continue;
        if (tape != nullptr && tape != t->tape()) throw ContractError("operation mixes tensors from different tapes");
        tape = t->tape();
    }
    return tape;
}

template <typename T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs) {
    return common_tape(std::vector<const Tensor<T>*>(inputs));
}

template class Tape<float>;
template class Tape<double>;
template Tape<float>* common_tape(std::initializer_list<const Tensor<float>*>);
template Tape<double>* common_tape(std::initializer_list<const Tensor<double>*>);
template Tape<float>* common_tape(const std::vector<const Tensor<float>*>&);
template Tape<double>* common_tape(const std::vector<const Tensor<double>*>&);

}  // namespace hcpn

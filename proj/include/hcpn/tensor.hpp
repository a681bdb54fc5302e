#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "hcpn/errors.hpp"

namespace hcpn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

// Dense row-major n-dimensional array. Element storage is shared and never
// mutated after construction, so copies are cheap and safe to share across
// threads. Feature maps use the channel-planar shape {C, H, W}; matrices use
// {rows, cols}.
//
// A tensor may be attached to a Tape, in which case it names a node of the
// recorded graph. Reshaping keeps the node, since gradients are stored flat.
template <typename T>
class Tensor {
 public:
    using value_type = T;

    Tensor() : Tensor(Shape{0}) {}
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<T> values);

    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_->size(); }

    std::span<const T> values() const& noexcept { return {data_->data(), data_->size()}; }
    std::span<const T> values() const&& = delete;
    const T* data() const noexcept { return data_->data(); }
    const T& operator[](std::size_t i) const noexcept { return (*data_)[i]; }

    // Value of a one-element tensor.
    T item() const;

    // Index of the first non-finite element, or numel() when all are finite.
    std::size_t first_non_finite() const noexcept;
    bool all_finite() const noexcept { return first_non_finite() == numel(); }

    Tensor reshaped(Shape shape) const;
    Tensor detached() const;

    Tape<T>* tape() const noexcept { return tape_; }
    int node() const noexcept { return node_; }
    bool on_tape() const noexcept { return tape_ != nullptr; }

    bool same_storage(const Tensor& other) const noexcept { return data_ == other.data_; }

 private:
    friend class Tape<T>;

    Shape shape_;
    std::shared_ptr<const std::vector<T>> data_;
    Tape<T>* tape_ = nullptr;
    int node_ = -1;
};

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);

// Element-type conversion; the result is a constant (off any tape).
template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
    if constexpr (std::is_same_v<U, T>) {
        return t.detached();
    } else {
        return Tensor<U>(t.shape(), std::vector<U>(t.values().begin(), t.values().end()));
    }
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace hcpn

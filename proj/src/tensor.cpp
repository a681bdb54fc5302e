#include "hcpn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>

#include <malloc.h>

#include "hcpn/tape.hpp"

// ---- allocation -------------------------------------------------------------
//
// Every heap block starts on a 64-byte boundary. Vectorised kernels split a
// range into scalar head, packets and scalar tail according to the address,
// and the scalar and packet paths round differently; with a fixed alignment
// the split, and therefore every result, depends on shapes alone.

namespace {

constexpr std::size_t kAlign = 64;

void* aligned_block(std::size_t n) noexcept {
    const std::size_t rounded = (std::max<std::size_t>(n, 1) + kAlign - 1) / kAlign * kAlign;
    return std::aligned_alloc(kAlign, rounded);
}

void* aligned_block_or_throw(std::size_t n) {
    void* p = aligned_block(n);
    if (p == nullptr) throw std::bad_alloc();
    return p;
}

// Large activations are freed and reallocated every step; keep them in the
// heap instead of round-tripping through mmap and page faults.
const bool kHeapTuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
}();

}  // namespace

namespace hcpn {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(std::make_shared<const std::vector<T>>(shape_numel(shape_), T(0))) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape_) + " holds " + std::to_string(shape_numel(shape_)) +
                             " elements but " + std::to_string(values.size()) + " were supplied");
    }
    data_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    std::vector<T> v(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(v));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
}

template <typename T>
std::size_t Tensor<T>::first_non_finite() const noexcept {
    const auto& v = *data_;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) return i;
    }
    return v.size();
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::detached() const {
    Tensor out = *this;
    out.tape_ = nullptr;
    out.node_ = -1;
    return out;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.numel() * sizeof(T)) == 0;
}

template class Tensor<float>;
template class Tensor<double>;
template bool bitwise_equal(const Tensor<float>&, const Tensor<float>&);
template bool bitwise_equal(const Tensor<double>&, const Tensor<double>&);

}  // namespace hcpn

void* operator new(std::size_t n) { return aligned_block_or_throw(n); }
void* operator new[](std::size_t n) { return aligned_block_or_throw(n); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return aligned_block(n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return aligned_block(n); }
void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { std::free(p); }

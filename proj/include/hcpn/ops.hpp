#pragma once

#include <cstddef>
#include <vector>

#include "hcpn/tape.hpp"
#include "hcpn/tensor.hpp"

// Differentiable primitives. Every function records itself on the tape of its
// taped inputs (if any) and otherwise computes a plain value. Feature maps are
// {C, H, W}; matrices are {rows, cols}.
namespace hcpn {

enum class Axis { Row, Col };
enum class Padding { Same, Valid };
enum class NormMode { L2Channel, ChannelPos };

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t dilation = 1;
    Padding padding = Padding::Same;
};

inline constexpr double kNormEpsilon = 1e-8;
inline constexpr double kBceClamp = 1e-6;

// C = A B for A {m,k}, B {k,n}.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// Row: every row sums to one. Col: every column sums to one.
// Max-subtracted before exponentiation.
template <typename T>
Tensor<T> softmax(const Tensor<T>& s, Axis axis);

// Cross-correlation (no kernel flip). input {Cin,H,W}, kernel {Cout,Cin,k,k}
// with k odd, optional bias {Cout}.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias, Conv2dOptions opts = {});
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, Conv2dOptions opts = {}) {
    return conv2d<T>(input, kernel, nullptr, opts);
}

// {C,H,W} -> {C,1,1} spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& v);

// Bilinear resampling with corner alignment: output pixel (y,x) samples the
// input at (y*(H-1)/(H'-1), x*(W-1)/(W'-1)).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& v, std::size_t height, std::size_t width);

// L2Channel divides every channel map by its spatial L2 norm; ChannelPos
// divides every position's channel vector by its L2 norm. kNormEpsilon is
// added to the norm, so zero input maps to zero.
template <typename T>
Tensor<T> normalize(const Tensor<T>& v, NormMode mode);

// Binary operations accept equal shapes, or equal-rank shapes where each
// extent of one operand is either equal or 1 (e.g. {C,1,1} against {C,H,W}).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh(const Tensor<T>& a);
// Subgradient 0 at 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

// max(a, floor) where `floor` is treated as a constant; the gradient reaches
// `a` wherever a >= floor.
template <typename T>
Tensor<T> max_with_constant(const Tensor<T>& a, const Tensor<T>& floor);

// Concatenate / slice along axis 0 (channels for feature maps).
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t begin, std::size_t end);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

// Pixel-averaged binary cross-entropy of `pred` against a constant `target`.
// Predictions are clamped to [kBceClamp, 1-kBceClamp]; the clamped region
// receives zero gradient.
template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace hcpn

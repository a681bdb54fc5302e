#pragma once

#include <string>

#include "hcpn/params.hpp"

namespace hcpn {

// "<prefix>.wg", ".wl", ".b", each {channels}. W_g starts at sqrt(HW) so the
// l2-normalised maps come out with unit RMS; W_l starts at 1 and b at 0.
template <typename T>
void init_gac(ParamStore<T>& params, const std::string& prefix, std::size_t channels, std::size_t hw);

// Per channel c: g = W_g[c] * l2norm(V_c), l = g * tanh(W_l[c] * cn(V)_c + b[c]),
// output g + l, where cn normalises every position's channel vector.
template <typename T>
Tensor<T> gac_forward(const Tensor<T>& v, const Tensor<T>& w_g, const Tensor<T>& w_l, const Tensor<T>& b);

template <typename T>
Tensor<T> gac_forward(const Tensor<T>& v, const ParamStore<T>& params, const std::string& prefix);

}  // namespace hcpn

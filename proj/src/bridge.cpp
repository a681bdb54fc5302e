#include "hcpn/bridge.hpp"

#include <cmath>

#include "hcpn/ops.hpp"

namespace hcpn {

template <typename T>
void init_gac(ParamStore<T>& params, const std::string& prefix, std::size_t channels, std::size_t hw) {
    const auto g = ParamGroup::Bridge;
    params.add(prefix + ".wg", g, Tensor<T>::full({channels}, static_cast<T>(std::sqrt(static_cast<double>(hw)))));
    params.add(prefix + ".wl", g, Tensor<T>::full({channels}, T{1}));
    params.add(prefix + ".b", g, Tensor<T>({channels}));
}

template <typename T>
Tensor<T> gac_forward(const Tensor<T>& v, const Tensor<T>& w_g, const Tensor<T>& w_l, const Tensor<T>& b) {
    if (v.rank() != 3) throw DimensionError("gac_forward expects a feature map, got " + shape_str(v.shape()));
    const std::size_t c = v.extent(0);
    for (const Tensor<T>* p : {&w_g, &w_l, &b}) {
        if (p->shape() != Shape{c}) {
            throw DimensionError("gac_forward: parameter " + shape_str(p->shape()) + " does not match " +
                                 std::to_string(c) + " channels");
        }
    }
    TapeScope<T> scope(common_tape({&v, &w_g, &w_l, &b}), "bridge_gac");
    const Shape col{c, 1, 1};
    const Tensor<T> g = hadamard(normalize(v, NormMode::L2Channel), w_g.reshaped(col));
    const Tensor<T> pre = add(hadamard(normalize(v, NormMode::ChannelPos), w_l.reshaped(col)), b.reshaped(col));
    return add(g, hadamard(g, tanh(pre)));
}

template <typename T>
Tensor<T> gac_forward(const Tensor<T>& v, const ParamStore<T>& params, const std::string& prefix) {
    return gac_forward(v, params.get(prefix + ".wg"), params.get(prefix + ".wl"), params.get(prefix + ".b"));
}

template void init_gac(ParamStore<float>&, const std::string&, std::size_t, std::size_t);
template void init_gac(ParamStore<double>&, const std::string&, std::size_t, std::size_t);
template Tensor<float> gac_forward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&);
template Tensor<double> gac_forward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                    const Tensor<double>&);
template Tensor<float> gac_forward(const Tensor<float>&, const ParamStore<float>&, const std::string&);
template Tensor<double> gac_forward(const Tensor<double>&, const ParamStore<double>&, const std::string&);

}  // namespace hcpn

#include "hcpn/mask.hpp"

#include <algorithm>

namespace hcpn {

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

template <typename T>
BinaryMask threshold(const Tensor<T>& map, double level) {
    std::size_t h = 0, w = 0;
    if (map.rank() == 3 && map.extent(0) == 1) {
        h = map.extent(1);
        w = map.extent(2);
    } else if (map.rank() == 2) {
        h = map.extent(0);
        w = map.extent(1);
    } else {
        throw DimensionError("threshold expects a single-channel map, got " + shape_str(map.shape()));
    }
    BinaryMask out(h, w);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = map[i] >= level ? 1 : 0;
    return out;
}

template <typename T>
Tensor<T> to_tensor(const BinaryMask& m) {
    std::vector<T> v(m.data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.data[i] ? T{1} : T{0};
    return Tensor<T>({1, m.height, m.width}, std::move(v));
}

namespace {

// any = true: dilation (some neighbour set); any = false: erosion (all set).
BinaryMask morph(const BinaryMask& m, bool any, bool outside) {
    BinaryMask out(m.height, m.width);
    const auto h = static_cast<std::ptrdiff_t>(m.height), w = static_cast<std::ptrdiff_t>(m.width);
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            bool acc = !any;
            for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
                for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                    const std::ptrdiff_t yy = y + dy, xx = x + dx;
                    const bool inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
                    const bool v = inside ? m.data[static_cast<std::size_t>(yy * w + xx)] != 0 : outside;
                    acc = any ? (acc || v) : (acc && v);
                }
            }
            out.data[static_cast<std::size_t>(y * w + x)] = acc ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

BinaryMask dilate3x3(const BinaryMask& m) { return morph(m, true, false); }
BinaryMask erode3x3(const BinaryMask& m, bool outside) { return morph(m, false, outside); }
BinaryMask close3x3(const BinaryMask& m) { return erode3x3(dilate3x3(m), true); }

BinaryMask fill_enclosed(const BinaryMask& m) {
    const std::size_t h = m.height, w = m.width;
    std::vector<std::uint8_t> outside(h * w, 0);
    std::vector<std::size_t> stack;
    auto seed = [&](std::size_t y, std::size_t x) {
        const std::size_t i = y * w + x;
        if (!m.data[i] && !outside[i]) {
            outside[i] = 1;
            stack.push_back(i);
        }
    };
    for (std::size_t x = 0; x < w; ++x) {
        seed(0, x);
        seed(h - 1, x);
    }
    for (std::size_t y = 0; y < h; ++y) {
        seed(y, 0);
        seed(y, w - 1);
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const std::size_t y = i / w, x = i % w;
        if (y > 0) seed(y - 1, x);
        if (y + 1 < h) seed(y + 1, x);
        if (x > 0) seed(y, x - 1);
        if (x + 1 < w) seed(y, x + 1);
    }
    BinaryMask inside(h, w);
    for (std::size_t i = 0; i < h * w; ++i) inside.data[i] = outside[i] ? 0 : 1;
    return inside;
}

BinaryMask contour_from_mask(const BinaryMask& m) {
    const BinaryMask d = dilate3x3(m), e = erode3x3(m, false);
    BinaryMask out(m.height, m.width);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (d.data[i] != 0) != (e.data[i] != 0) ? 1 : 0;
    return out;
}

template BinaryMask threshold(const Tensor<float>&, double);
template BinaryMask threshold(const Tensor<double>&, double);
template Tensor<float> to_tensor(const BinaryMask&);
template Tensor<double> to_tensor(const BinaryMask&);

}  // namespace hcpn

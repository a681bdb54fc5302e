#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hcpn/tensor.hpp"

namespace hcpn {

// Row-major binary image; nonzero bytes are foreground.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Pixels >= threshold become foreground. `map` is {1,H,W} or {H,W}.
template <typename T>
BinaryMask threshold(const Tensor<T>& map, double level = 0.5);

// {1,H,W} tensor with values 0/1.
template <typename T>
Tensor<T> to_tensor(const BinaryMask& m);

// 3x3 square structuring element. Pixels outside the image read as
// `outside` during erosion and as background during dilation.
BinaryMask dilate3x3(const BinaryMask& m);
BinaryMask erode3x3(const BinaryMask& m, bool outside = false);

// Dilation then erosion; the erosion treats the outside as foreground so the
// closing never shrinks shapes touching the border.
BinaryMask close3x3(const BinaryMask& m);

// Pixels not reachable from the image border through 4-connected background.
// Foreground pixels are always inside.
BinaryMask fill_enclosed(const BinaryMask& m);

// Morphological gradient: dilate3x3 XOR erode3x3, the erosion treating the
// outside as background.
BinaryMask contour_from_mask(const BinaryMask& m);

}  // namespace hcpn

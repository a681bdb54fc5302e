#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "hcpn/mask.hpp"
#include "hcpn/tensor.hpp"

namespace hcpn {

// Dense displacement field, interleaved (u, v) per pixel, row-major.
struct FlowField {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> uv;

    FlowField() = default;
    FlowField(std::size_t h, std::size_t w) : height(h), width(w), uv(2 * h * w, 0.0f) {}

    float& u(std::size_t y, std::size_t x) { return uv[2 * (y * width + x)]; }
    float& v(std::size_t y, std::size_t x) { return uv[2 * (y * width + x) + 1]; }
    float u(std::size_t y, std::size_t x) const { return uv[2 * (y * width + x)]; }
    float v(std::size_t y, std::size_t x) const { return uv[2 * (y * width + x) + 1]; }

    friend bool operator==(const FlowField&, const FlowField&) = default;
};

inline constexpr float kFloMagic = 202021.25f;

// Middlebury .flo: f32 magic, i32 width, i32 height, interleaved f32 (u,v),
// all little-endian.
std::string encode_flo(const FlowField& flow);
FlowField decode_flo(const std::string& bytes);
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

// Binary PPM (P6, maxval 255) for {3,h,w} images in [0,1]; values are
// rounded to the nearest 8-bit level.
std::string encode_ppm(const Tensor<float>& image);
Tensor<float> decode_ppm(const std::string& bytes);
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_ppm(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255): 0 background, 255 foreground. Reading treats
// any nonzero byte as foreground.
std::string encode_pgm(const BinaryMask& mask);
BinaryMask decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_pgm(const std::filesystem::path& path);

// 16-bit PGM (P5, maxval 65535, big-endian samples) for {1,h,w} maps in [0,1].
std::string encode_pgm16(const Tensor<float>& map);
Tensor<float> decode_pgm16(const std::string& bytes);
void write_pgm16(const std::filesystem::path& path, const Tensor<float>& map);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// Lower-case hex SHA-256.
std::string sha256_hex(const std::string& bytes);

}  // namespace hcpn

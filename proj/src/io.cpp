#include "hcpn/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>

namespace hcpn {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
    return v;
}

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

struct NetpbmHeader {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t maxval = 0;
    std::size_t data_offset = 0;
};

// Parses "P<kind> <w> <h> <maxval>" with optional comments.
NetpbmHeader parse_netpbm(const std::string& b, char kind) {
    if (b.size() < 2 || b[0] != 'P' || b[1] != kind) {
        throw FormatError(std::string("expected netpbm magic P") + kind, 0);
    }
    std::size_t pos = 2;
    auto skip_space = [&] {
        while (pos < b.size()) {
            if (b[pos] == '#') {
                while (pos < b.size() && b[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(b[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&](const char* what) {
        skip_space();
        const std::size_t start = pos;
        std::size_t v = 0;
        while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
            v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
            if (v > (1u << 24)) throw FormatError(std::string("netpbm ") + what + " too large", start);
            ++pos;
        }
        if (pos == start) throw FormatError(std::string("netpbm header: missing ") + what, start);
        return v;
    };
    NetpbmHeader h;
    h.width = number("width");
    h.height = number("height");
    h.maxval = number("maxval");
    if (h.maxval == 0 || h.maxval > 65535) throw FormatError("netpbm maxval out of range", pos);
    if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
        throw FormatError("netpbm header not terminated by whitespace", pos);
    }
    h.data_offset = pos + 1;
    return h;
}

void require_payload(const std::string& b, std::size_t offset, std::size_t bytes, const char* what) {
    if (b.size() - std::min(b.size(), offset) < bytes) {
        throw FormatError(std::string(what) + " payload truncated: need " + std::to_string(bytes) + " bytes", b.size());
    }
}

std::string netpbm_header(char kind, std::size_t w, std::size_t h, std::size_t maxval) {
    return "P" + std::string(1, kind) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
           std::to_string(maxval) + "\n";
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path.string());
}

std::string encode_flo(const FlowField& flow) {
    std::string out;
    out.reserve(12 + flow.uv.size() * 4);
    put_u32(out, std::bit_cast<std::uint32_t>(kFloMagic));
    put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(flow.width)));
    put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(flow.height)));
    for (float v : flow.uv) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

FlowField decode_flo(const std::string& b) {
    if (b.size() < 4) throw FormatError("flo file truncated before magic", b.size());
    if (std::bit_cast<float>(get_u32(b, 0)) != kFloMagic) throw FormatError("bad flo magic", 0);
    if (b.size() < 12) throw FormatError("flo header truncated", b.size());
    const auto w = static_cast<std::int32_t>(get_u32(b, 4));
    const auto h = static_cast<std::int32_t>(get_u32(b, 8));
    if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
        throw FormatError("implausible flo size " + std::to_string(w) + "x" + std::to_string(h), 4);
    }
    FlowField flow(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    require_payload(b, 12, flow.uv.size() * 4, "flo");
    if (b.size() != 12 + flow.uv.size() * 4) throw FormatError("trailing bytes after flo payload", 12 + flow.uv.size() * 4);
    for (std::size_t i = 0; i < flow.uv.size(); ++i) flow.uv[i] = std::bit_cast<float>(get_u32(b, 12 + 4 * i));
    return flow;
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) { write_file(path, encode_flo(flow)); }
FlowField read_flo(const std::filesystem::path& path) { return decode_flo(read_file(path)); }

std::string encode_ppm(const Tensor<float>& image) {
    if (image.rank() != 3 || image.extent(0) != 3) throw DimensionError("ppm needs a [3,h,w] image, got " + shape_str(image.shape()));
    const std::size_t h = image.extent(1), w = image.extent(2), plane = h * w;
    std::string out = netpbm_header('6', w, h, 255);
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) out.push_back(static_cast<char>(to_byte(image[c * plane + i])));
    }
    return out;
}

Tensor<float> decode_ppm(const std::string& b) {
    const NetpbmHeader hd = parse_netpbm(b, '6');
    if (hd.maxval != 255) throw FormatError("only 8-bit ppm is supported", 0);
    const std::size_t plane = hd.width * hd.height;
    require_payload(b, hd.data_offset, 3 * plane, "ppm");
    std::vector<float> v(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            v[c * plane + i] = static_cast<float>(static_cast<unsigned char>(b[hd.data_offset + 3 * i + c])) / 255.0f;
        }
    }
    return Tensor<float>({3, hd.height, hd.width}, std::move(v));
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) { write_file(path, encode_ppm(image)); }
Tensor<float> read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

std::string encode_pgm(const BinaryMask& mask) {
    std::string out = netpbm_header('5', mask.width, mask.height, 255);
    for (std::uint8_t v : mask.data) out.push_back(static_cast<char>(v ? 255 : 0));
    return out;
}

BinaryMask decode_pgm(const std::string& b) {
    const NetpbmHeader hd = parse_netpbm(b, '5');
    if (hd.maxval > 255) throw FormatError("mask pgm must be 8-bit", 0);
    BinaryMask m(hd.height, hd.width);
    require_payload(b, hd.data_offset, m.data.size(), "pgm");
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = b[hd.data_offset + i] != 0 ? 1 : 0;
    return m;
}

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) { write_file(path, encode_pgm(mask)); }
BinaryMask read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

std::string encode_pgm16(const Tensor<float>& map) {
    if (map.rank() != 3 || map.extent(0) != 1) throw DimensionError("pgm16 needs a [1,h,w] map, got " + shape_str(map.shape()));
    std::string out = netpbm_header('5', map.extent(2), map.extent(1), 65535);
    for (float v : map.values()) {
        const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
        out.push_back(static_cast<char>(q >> 8));
        out.push_back(static_cast<char>(q & 0xFF));
    }
    return out;
}

Tensor<float> decode_pgm16(const std::string& b) {
    const NetpbmHeader hd = parse_netpbm(b, '5');
    if (hd.maxval != 65535) throw FormatError("expected 16-bit pgm", 0);
    const std::size_t n = hd.width * hd.height;
    require_payload(b, hd.data_offset, 2 * n, "pgm16");
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto hi = static_cast<unsigned char>(b[hd.data_offset + 2 * i]);
        const auto lo = static_cast<unsigned char>(b[hd.data_offset + 2 * i + 1]);
        v[i] = static_cast<float>((hi << 8) | lo) / 65535.0f;
    }
    return Tensor<float>({1, hd.height, hd.width}, std::move(v));
}

void write_pgm16(const std::filesystem::path& path, const Tensor<float>& map) { write_file(path, encode_pgm16(map)); }

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

}  // namespace hcpn

#include "hcpn/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hcpn {
namespace {

constexpr char kMagic[4] = {'H', 'C', 'P', 'N'};

template <typename U>
void put_le(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

    template <typename U>
    U le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string raw(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

 private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string_view group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::Encoder: return "encoder";
        case ParamGroup::Bridge: return "bridge";
        case ParamGroup::Decoder: return "decoder";
    }
    return "?";
}

template <typename T>
void ParamStore<T>::add(std::string name, ParamGroup group, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), group, value.detached()});
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("missing parameter '" + std::string(name) + "'");
    return entries_[it->second].value;
}

template <typename T>
void ParamStore<T>::set(std::string_view name, Tensor<T> value) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("missing parameter '" + std::string(name) + "'");
    Entry& e = entries_[it->second];
    if (e.value.shape() != value.shape()) {
        throw ConfigError("parameter '" + e.name + "' has shape " + shape_str(e.value.shape()) + ", got " +
                          shape_str(value.shape()));
    }
    e.value = value.detached();
}

template <typename T>
std::size_t ParamStore<T>::element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

template <typename T>
ParamStore<T> ParamStore<T>::bind(Tape<T>& tape) const {
    ParamStore out;
    out.index_ = index_;
    out.entries_.reserve(entries_.size());
    for (const auto& e : entries_) out.entries_.push_back(Entry{e.name, e.group, tape.watch(e.value, e.name)});
    return out;
}

template <typename T>
ParamStore<T> ParamStore<T>::with_values(const std::vector<Tensor<T>>& values) const {
    if (values.size() != entries_.size()) {
        throw ConfigError("expected " + std::to_string(entries_.size()) + " parameter values, got " +
                          std::to_string(values.size()));
    }
    ParamStore out;
    out.index_ = index_;
    out.entries_.reserve(entries_.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Entry& e = entries_[i];
        if (values[i].shape() != e.value.shape()) {
            throw ConfigError("parameter '" + e.name + "' has shape " + shape_str(e.value.shape()) + ", got " +
                              shape_str(values[i].shape()));
        }
        out.entries_.push_back(Entry{e.name, e.group, values[i]});
    }
    return out;
}

template <typename T>
Tensor<T> fan_in_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    return rng.uniform_tensor<T>(std::move(shape), -bound, bound);
}

template <typename T>
void add_conv(ParamStore<T>& store, Rng& rng, const std::string& prefix, ParamGroup group, std::size_t cout,
              std::size_t cin, std::size_t k) {
    store.add(prefix + ".w", group, fan_in_uniform<T>(rng, {cout, cin, k, k}, cin * k * k));
    store.add(prefix + ".b", group, Tensor<T>({cout}));
}

std::filesystem::path manifest_path_for(const std::filesystem::path& blob) {
    std::filesystem::path p = blob;
    p.replace_extension(".json");
    if (p == blob) p += ".json";
    return p;
}

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const std::filesystem::path& blob, const nlohmann::json& config) {
    std::string out(kMagic, 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    nlohmann::json listing = nlohmann::json::array();
    for (const auto& e : params.entries()) {
        if (e.name.size() > 0xFFFF) throw ConfigError("parameter name too long: " + e.name);
        if (e.value.rank() > 0xFF) throw ConfigError("parameter rank too large: " + e.name);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.value.rank()));
        for (std::size_t ext : e.value.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ext));
        for (T v : e.value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        listing.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"group", group_name(e.group)}});
    }

    std::ofstream f(blob, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + blob.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + blob.string());

    nlohmann::json manifest = {{"format", "HCPN"}, {"version", kCheckpointVersion}, {"tensors", listing}, {"config", config}};
    std::ofstream m(manifest_path_for(blob), std::ios::trunc);
    if (!m) throw IoError("cannot write checkpoint manifest for " + blob.string());
    m << manifest.dump(2) << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& blob) {
    std::ifstream f(blob, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + blob.string());
    Reader r(std::string(std::istreambuf_iterator<char>(f), {}));

    if (r.raw(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic in " + blob.string(), 0);
    const auto version = r.le<std::uint32_t>("format version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    }

    Checkpoint ckpt;
    while (!r.done()) {
        const auto len = r.le<std::uint16_t>("name length");
        std::string name = r.raw(len, "name");
        const auto rank = r.le<std::uint8_t>("rank");
        Shape shape;
        for (unsigned i = 0; i < rank; ++i) shape.push_back(r.le<std::uint32_t>("extent"));
        std::vector<float> values(shape_numel(shape));
        for (float& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>("tensor values"));
        ckpt.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
    }

    const auto mpath = manifest_path_for(blob);
    ckpt.manifest = nlohmann::json::object();
    if (std::filesystem::exists(mpath)) {
        std::ifstream m(mpath);
        try {
            ckpt.manifest = nlohmann::json::parse(m);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("checkpoint manifest " + mpath.string() + ": " + e.what());
        }
    }
    return ckpt;
}

template <typename T>
void load_into(ParamStore<T>& params, const Checkpoint& ckpt) {
    std::unordered_map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, t] : ckpt.tensors) by_name.emplace(name, &t);
    for (const auto& e : params.entries()) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) throw ConfigError("checkpoint lacks tensor '" + e.name + "'");
        const Tensor<float>& src = *it->second;
        if (src.shape() != e.value.shape()) {
            throw ConfigError("checkpoint tensor '" + e.name + "' has shape " + shape_str(src.shape()) +
                              " but the configured model expects " + shape_str(e.value.shape()));
        }
    }
    for (const auto& e : std::vector(params.entries())) {
        const Tensor<float>& src = *by_name.at(e.name);
        params.set(e.name, Tensor<T>(src.shape(), std::vector<T>(src.values().begin(), src.values().end())));
    }
    if (by_name.size() != params.size()) {
        for (const auto& [name, t] : ckpt.tensors) {
            if (!params.contains(name)) throw ConfigError("checkpoint tensor '" + name + "' is not part of the configured model");
        }
    }
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> fan_in_uniform(Rng&, Shape, std::size_t);
template Tensor<double> fan_in_uniform(Rng&, Shape, std::size_t);
template void add_conv(ParamStore<float>&, Rng&, const std::string&, ParamGroup, std::size_t, std::size_t, std::size_t);
template void add_conv(ParamStore<double>&, Rng&, const std::string&, ParamGroup, std::size_t, std::size_t, std::size_t);
template void save_checkpoint(const ParamStore<float>&, const std::filesystem::path&, const nlohmann::json&);
template void save_checkpoint(const ParamStore<double>&, const std::filesystem::path&, const nlohmann::json&);
template void load_into(ParamStore<float>&, const Checkpoint&);
template void load_into(ParamStore<double>&, const Checkpoint&);

}  // namespace hcpn

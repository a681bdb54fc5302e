#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcpn/random.hpp"
#include "hcpn/tape.hpp"

namespace hcpn {

// Optimizer groups; each receives its own learning rate.
enum class ParamGroup { Encoder, Bridge, Decoder };

std::string_view group_name(ParamGroup g);

// Named, ordered collection of learnable tensors.
template <typename T>
class ParamStore {
 public:
    struct Entry {
        std::string name;
        ParamGroup group;
        Tensor<T> value;
    };

    void add(std::string name, ParamGroup group, Tensor<T> value);

    // Throws ConfigError naming the tensor when absent.
    const Tensor<T>& get(std::string_view name) const;
    bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

    // Replaces a value; the shape must match.
    void set(std::string_view name, Tensor<T> value);

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t element_count() const;

    // Copy whose tensors are leaves of `tape`.
    ParamStore bind(Tape<T>& tape) const;

    // Same names and groups holding `values` as given (taped tensors stay
    // taped). Shapes must match.
    ParamStore with_values(const std::vector<Tensor<T>>& values) const;

    // Tape the parameters are bound to, if any.
    Tape<T>* tape() const noexcept {
        for (const auto& e : entries_)
            if (e.value.on_tape()) return e.value.tape();
        return nullptr;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& e : entries_) {
            std::vector<U> v(e.value.values().begin(), e.value.values().end());
            out.add(e.name, e.group, Tensor<U>(e.value.shape(), std::move(v)));
        }
        return out;
    }

 private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Kernel drawn from U(-sqrt(3/fan_in), sqrt(3/fan_in)), i.e. standard
// deviation 1/sqrt(fan_in).
template <typename T>
Tensor<T> fan_in_uniform(Rng& rng, Shape shape, std::size_t fan_in);

// Adds "<prefix>.w" {cout,cin,k,k} (fan-in scaled) and "<prefix>.b" {cout}
// (zeros).
template <typename T>
void add_conv(ParamStore<T>& store, Rng& rng, const std::string& prefix, ParamGroup group, std::size_t cout,
              std::size_t cin, std::size_t k);

// Checkpoint blob: "HCPN", u32 format version, then per tensor: u16 name
// length, UTF-8 name, u8 rank, u32 extents, little-endian f32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const std::filesystem::path& blob, const nlohmann::json& config);

struct Checkpoint {
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
    nlohmann::json manifest;  // empty object when no sidecar exists
};

Checkpoint read_checkpoint(const std::filesystem::path& blob);

// Copies checkpoint tensors into `params`. Every parameter must be present
// with a matching shape, else ConfigError naming the tensor.
template <typename T>
void load_into(ParamStore<T>& params, const Checkpoint& ckpt);

std::filesystem::path manifest_path_for(const std::filesystem::path& blob);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace hcpn

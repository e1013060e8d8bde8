#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "darf/binio.hpp"
#include "darf/nnkit/tensor.hpp"

// Checkpoint layout: "DARF", u32 version = 1, then records until EOF:
//   u16 name length, name bytes, u8 rank, u64 dims[rank], f32 payload (LE).
// EMA shadows use the "ema/" name prefix.

namespace darf::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

inline void write_record(std::ostream& os, const std::string& name, const Tensor<float>& t) {
    if (name.size() > UINT16_MAX) throw IoError("record name too long: " + name.substr(0, 64));
    if (t.rank() > UINT8_MAX) throw IoError("record rank too large: " + name);
    io::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) io::put<std::uint64_t>(os, d);
    io::put_floats(os, t.raw(), t.size());
}

inline NamedTensor read_record(std::istream& is) {
    NamedTensor r;
    const auto len = io::get<std::uint16_t>(is);
    r.name.resize(len);
    if (!is.read(r.name.data(), len)) throw IoError("truncated record name");
    const auto rank = io::get<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = io::get<std::uint64_t>(is);
    const std::size_t n = numel(shape);
    if (n > (std::size_t{1} << 36)) throw IoError("record " + r.name + " is implausibly large");
    std::vector<float> data(n);
    io::get_floats(is, data.data(), n);
    r.value = Tensor<float>(std::move(shape), std::move(data));
    return r;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    io::put_magic(os, "DARF");
    io::put<std::uint32_t>(os, kCheckpointVersion);
    for (const auto& r : records) write_record(os, r.name, r.value);
    if (!os) throw IoError("write failed: " + path.string());
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("cannot open checkpoint: " + path.string());
    io::expect_magic(is, "DARF", path.string());
    const auto version = io::get<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    std::vector<NamedTensor> out;
    while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_record(is));
    return out;
}

template <class T>
void append_params(std::vector<NamedTensor>& out, const ParamList<T>& ps, const std::string& prefix = "") {
    for (const auto* p : ps) out.push_back({prefix + p->name, cast<float>(p->value)});
}

template <class T>
void append_shadow(std::vector<NamedTensor>& out, const ParamList<T>& ps, const std::vector<Tensor<T>>& shadow) {
    for (std::size_t i = 0; i < ps.size(); ++i) out.push_back({"ema/" + ps[i]->name, cast<float>(shadow.at(i))});
}

inline const Tensor<float>* find_record(const std::vector<NamedTensor>& recs, const std::string& name) {
    for (const auto& r : recs)
        if (r.name == name) return &r.value;
    return nullptr;
}

/// Loads parameter values by name (with an optional prefix, e.g. "ema/").
template <class T>
void load_params(const ParamList<T>& ps, const std::vector<NamedTensor>& recs, const std::string& prefix = "") {
    std::map<std::string, const Tensor<float>*> index;
    for (const auto& r : recs) index[r.name] = &r.value;
    for (auto* p : ps) {
        auto it = index.find(prefix + p->name);
        if (it == index.end()) throw MissingArtifactError("checkpoint lacks parameter " + prefix + p->name);
        if (it->second->shape() != p->value.shape())
            throw DimensionError("checkpoint parameter " + prefix + p->name + " has shape " +
                                 to_string(it->second->shape()) + ", model expects " + to_string(p->value.shape()));
        p->value = cast<T>(*it->second);
        p->zero_grad();
    }
}

}  // namespace darf::nn

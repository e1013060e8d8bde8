#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "darf/error.hpp"
#include "darf/nnkit/checkpoint.hpp"

// Tensor files reuse the checkpoint layout. Text (hashes, config echo, mode
// names) is stored one byte per float under "meta/" names, which keeps every
// artifact readable by one loader.

namespace darf::harness {

inline nn::Tensor<float> text_tensor(const std::string& s) {
    nn::Tensor<float> t(nn::Shape{s.size()});
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = static_cast<float>(static_cast<unsigned char>(s[i]));
    return t;
}

inline std::string tensor_text(const nn::Tensor<float>& t) {
    std::string s(t.size(), '\0');
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float v = t[i];
        if (!(v >= 0 && v <= 255 && v == static_cast<float>(static_cast<int>(v))))
            throw IoError("text record holds a non-byte value");
        s[i] = static_cast<char>(static_cast<unsigned char>(v));
    }
    return s;
}

/// Named tensors plus "meta/<key>" text entries.
struct TensorFile {
    std::vector<nn::NamedTensor> records;

    void put(const std::string& name, nn::Tensor<float> t) {
        for (auto& r : records)
            if (r.name == name) {
                r.value = std::move(t);
                return;
            }
        records.push_back({name, std::move(t)});
    }
    void put_text(const std::string& key, const std::string& value) { put("meta/" + key, text_tensor(value)); }

    bool has(const std::string& name) const { return nn::find_record(records, name) != nullptr; }
    const nn::Tensor<float>& get(const std::string& name, const std::string& origin = "tensor file") const {
        const auto* t = nn::find_record(records, name);
        if (!t) throw MissingArtifactError(origin + " has no '" + name + "' record");
        return *t;
    }
    std::string text(const std::string& key, const std::string& origin = "tensor file") const {
        return tensor_text(get("meta/" + key, origin));
    }
    std::string text_or(const std::string& key, const std::string& fallback) const {
        return has("meta/" + key) ? tensor_text(get("meta/" + key)) : fallback;
    }

    void save(const std::filesystem::path& p) const {
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        nn::save_checkpoint(p, records);
    }
    static TensorFile load(const std::filesystem::path& p) { return TensorFile{nn::load_checkpoint(p)}; }
};

/// Throws ConfigError when an input artifact was produced under a different
/// configuration, unless `force` is set.
inline void check_provenance(const std::string& what, const std::string& found, const std::string& expected, bool force) {
    if (found == expected || force) return;
    throw ConfigError(what + " was built with configuration hash " + found + " but the current configuration expects " +
                      expected + "; rebuild it or pass --force");
}

}  // namespace darf::harness

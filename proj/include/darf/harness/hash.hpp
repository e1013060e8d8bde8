#pragma once

#include <openssl/evp.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <string_view>

#include "darf/error.hpp"

namespace darf::harness {

using Digest = std::array<unsigned char, 20>;

inline Digest sha1(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    Digest d{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), d.data(), &len) != 1 ||
        len != d.size())
        throw Error("SHA-1 digest failed");
    return d;
}

inline std::string hex(const Digest& d) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    for (unsigned char c : d) {
        s += kHex[c >> 4];
        s += kHex[c & 15];
    }
    return s;
}

inline std::string sha1_hex(std::string_view bytes) { return hex(sha1(bytes)); }

/// Content hash in git's blob convention: sha1("blob <size>\0" + content).
inline std::string blob_hash(std::string_view content) {
    std::string s = "blob " + std::to_string(content.size());
    s.push_back('\0');
    s.append(content);
    return sha1_hex(s);
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw MissingArtifactError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::string file_blob_hash(const std::filesystem::path& p) { return blob_hash(read_file(p)); }

}  // namespace darf::harness

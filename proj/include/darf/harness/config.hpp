#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "darf/error.hpp"
#include "darf/harness/hash.hpp"

namespace darf::harness {

struct KeyInfo {
    const char* key;
    const char* value;  // default
    const char* help;
};

/// Every recognised key with its desk-scale default. Stage hashes cover the
/// keys whose prefix belongs to the stage, so the order here is irrelevant.
inline const std::vector<KeyInfo>& config_schema() {
    static const std::vector<KeyInfo> k{
        {"data.tracksets", "2000", "training tracksets (10 windows each)"},
        {"data.seed", "1", "training data seed"},
        {"data.window", "10", "window length in seconds"},
        {"data.hop", "3", "window hop in seconds"},
        {"data.track_len", "37", "trackset length in seconds"},
        {"embedder.seed", "24301", "seed of the frozen toy embedder"},
        {"codec.steps", "2000", "consistency training steps"},
        {"codec.batch", "8", "crops per step"},
        {"codec.crop_frames", "2", "crop length in latent frames"},
        {"codec.tracksets", "50", "tracksets the codec sees"},
        {"codec.mix_prob", "0.5", "probability that a crop is a full mix rather than one track"},
        {"codec.lr", "1e-3", "peak learning rate"},
        {"codec.teacher", "0.9", "EMA teacher momentum"},
        {"codec.width", "64", "decoder width"},
        {"codec.blocks", "3", "decoder residual blocks"},
        {"codec.seed", "1", "initialization and training seed"},
        {"codec.render_t", "80", "decoder noise level for rendering"},
        {"ldm.width", "64", "denoiser width"},
        {"ldm.blocks", "4", "residual blocks per side"},
        {"ldm.embed", "256", "conditioning embedding width"},
        {"ldm.steps", "30000", "training steps"},
        {"ldm.batch", "32", "items per step"},
        {"ldm.lr", "1e-3", "peak learning rate"},
        {"ldm.warmup", "500", "linear warmup steps"},
        {"ldm.weight_decay", "0.01", "AdamW weight decay"},
        {"ldm.ema", "0.9999", "EMA momentum (with warmup)"},
        {"ldm.p_drop_context", "0.5", "context dropout probability"},
        {"ldm.p_drop_style", "0.5", "style dropout probability"},
        {"ldm.sigma_data", "auto", "data standard deviation, or auto to estimate from the corpus"},
        {"ldm.seed", "1", "initialization and training seed"},
        {"eval.tracksets", "300", "held-out tracksets: reference windows first, then prompt windows"},
        {"eval.seed", "1001", "held-out data seed"},
        {"eval.reference", "2000", "reference set size"},
        {"eval.batches", "5", "evaluation batches"},
        {"eval.batch_size", "200", "candidates per batch"},
        {"eval.k", "5", "neighbours for density and coverage"},
        {"sample.mode", "full", "full | context-only | style-only | description-context | description-only | uncond"},
        {"sample.T", "30", "diffusion steps"},
        {"sample.sigma_min", "0.002", "smallest noise level"},
        {"sample.sigma_max", "80", "largest noise level"},
        {"sample.rho", "7", "schedule curvature"},
        {"sample.cfg_context", "1", "context guidance strength"},
        {"sample.cfg_style", "1", "style guidance strength"},
        {"sample.stochasticity", "1", "0 = probability-flow ODE, 1 = full ancestral noise"},
        {"sample.second_order", "1", "Heun correction of the deterministic part (0 or 1)"},
        {"sample.stereo_width", "0", "pseudo-stereo fork fraction"},
        {"sample.seed", "1", "sampling seed"},
        {"sample.count", "1000", "number of generated windows"},
        {"sample.chunk", "64", "items per model call"},
        {"sample.mask_mode", "none", "none | inpaint | outpaint | variation | loop"},
        {"sample.mask", "", "generated frame ranges, e.g. 0-3,7-9 (inpaint/outpaint)"},
        {"sample.renoise", "80", "variation restart level"},
        {"sample.loop_frames", "2", "frames carried over in loop mode"},
        {"sweep.T", "2,5,10,30", "diffusion step grid"},
        {"sweep.cfg", "1,1.25,2", "guidance grid (applied to both sources)"},
        {"sweep.modes", "full,style-only,context-only,description-context,uncond", "conditional modes"},
        {"sweep.fig2_modes", "full,description-context,context-only,style-only,uncond,description-only",
         "modes of the steps-only sub-sweep"},
        {"sweep.seeds", "1,2,3,4,5", "sampling seeds per grid point"},
    };
    return k;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

/// key = value configuration with every key known in advance.
class Config {
public:
    Config() {
        for (const auto& k : config_schema()) values_[k.key] = k.value;
    }

    /// Lines of `key = value`; '#' starts a comment. Unknown or repeated keys
    /// are errors.
    static Config parse(const std::string& text, const std::string& origin = "config") {
        Config c;
        std::map<std::string, int> seen;
        std::istringstream is(text);
        std::string line;
        int n = 0;
        while (std::getline(is, line)) {
            ++n;
            line = trim(line.substr(0, line.find('#')));
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            if (seen.count(key))
                throw ConfigError(origin + ":" + std::to_string(n) + ": '" + key + "' already set on line " +
                                  std::to_string(seen[key]));
            seen[key] = n;
            c.set(key, trim(line.substr(eq + 1)), origin + ":" + std::to_string(n));
        }
        return c;
    }

    static Config load(const std::filesystem::path& p) {
        std::string text;
        try {
            text = read_file(p);
        } catch (const MissingArtifactError&) {
            throw ConfigError("cannot read config file " + p.string());
        }
        return parse(text, p.string());
    }

    void set(const std::string& key, const std::string& value, const std::string& where = "override") {
        if (!values_.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
        values_[key] = value;
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
        return it->second;
    }

    double number(const std::string& key) const { return parse_number(key, str(key)); }

    std::uint64_t integer(const std::string& key) const { return parse_integer(key, str(key)); }

    bool flag(const std::string& key) const {
        const auto v = integer(key);
        if (v > 1) throw ConfigError(key + ": expected 0 or 1");
        return v == 1;
    }

    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        for (const auto& s : split(str(key), ',')) out.push_back(parse_number(key, s));
        if (out.empty()) throw ConfigError(key + ": empty list");
        return out;
    }

    std::vector<std::uint64_t> integers(const std::string& key) const {
        std::vector<std::uint64_t> out;
        for (const auto& s : split(str(key), ',')) out.push_back(parse_integer(key, s));
        if (out.empty()) throw ConfigError(key + ": empty list");
        return out;
    }

    std::vector<std::string> words(const std::string& key) const { return split(str(key), ','); }

    /// Sorted `key = value` lines; identical configs give identical text.
    std::string canonical(const std::vector<std::string>& prefixes = {}) const {
        std::string out;
        for (const auto& [k, v] : values_) {
            const bool take = prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
                                  return k.rfind(p, 0) == 0;
                              });
            if (take) out += k + " = " + v + "\n";
        }
        return out;
    }

    std::string hash() const { return sha1_hex(canonical()); }

    friend bool operator==(const Config&, const Config&) = default;

private:
    static double parse_number(const std::string& key, const std::string& s) {
        double v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
            throw ConfigError(key + ": '" + s + "' is not a finite number");
        return v;
    }

    static std::uint64_t parse_integer(const std::string& key, const std::string& s) {
        std::uint64_t v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size())
            throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
        return v;
    }

    std::map<std::string, std::string> values_;
};

/// Frame ranges such as "0-3,7,8-9" as a per-frame mask (true = listed).
inline std::vector<bool> parse_frame_ranges(const std::string& text, std::size_t frames) {
    std::vector<bool> mask(frames, false);
    for (const auto& part : split(text, ',')) {
        const auto dash = part.find('-');
        std::size_t lo = 0, hi = 0;
        auto num = [&](const std::string& s) {
            std::size_t v = 0;
            const auto t = trim(s);
            const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
            if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty())
                throw ConfigError("frame range '" + part + "' is malformed");
            return v;
        };
        if (dash == std::string::npos) {
            lo = hi = num(part);
        } else {
            lo = num(part.substr(0, dash));
            hi = num(part.substr(dash + 1));
        }
        if (lo > hi || hi >= frames)
            throw ConfigError("frame range '" + part + "' is outside 0-" + std::to_string(frames - 1));
        for (std::size_t f = lo; f <= hi; ++f) mask[f] = true;
    }
    return mask;
}

}  // namespace darf::harness

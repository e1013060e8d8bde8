#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "darf/error.hpp"
#include "darf/rng.hpp"

namespace darf::synth {

enum class Role : std::uint8_t { bass = 0, guitar, piano, drums, vocal, other };
inline constexpr std::size_t kRoleCount = 6;
inline constexpr std::array<Role, kRoleCount> kAllRoles{Role::bass,  Role::guitar, Role::piano,
                                                        Role::drums, Role::vocal,  Role::other};

inline std::string_view role_name(Role r) {
    switch (r) {
        case Role::bass: return "bass";
        case Role::guitar: return "guitar";
        case Role::piano: return "piano";
        case Role::drums: return "drums";
        case Role::vocal: return "vocal";
        case Role::other: return "other";
    }
    return "?";
}

struct AudioBuffer {
    std::vector<float> samples;
    std::uint32_t sample_rate = 4096;

    double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct Track {
    Role role;
    AudioBuffer signal;
};

struct TrackSet {
    std::uint64_t index = 0;
    std::vector<Track> tracks;
    double tempo_factor = 1.0;
    int key_index = 0;

    std::size_t length() const { return tracks.empty() ? 0 : tracks.front().signal.samples.size(); }
};

/// Half-open sample range [start, end).
struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

struct DatasetSpec {
    std::uint64_t n_tracksets = 2000;
    double window_len = 10.0;  // seconds
    double hop_len = 3.0;      // seconds
    double track_len = 37.0;   // seconds; 37 s gives 10 windows per trackset
    std::uint64_t seed = 1;
    std::uint32_t toy_sample_rate = 4096;

    std::size_t window_samples() const { return static_cast<std::size_t>(std::llround(window_len * toy_sample_rate)); }
    std::size_t hop_samples() const { return static_cast<std::size_t>(std::llround(hop_len * toy_sample_rate)); }
    std::size_t track_samples() const { return static_cast<std::size_t>(std::llround(track_len * toy_sample_rate)); }

    void validate() const {
        if (!(window_len > hop_len && hop_len > 0))
            throw ConfigError("dataset: need window_len > hop_len > 0, got " + std::to_string(window_len) + " / " +
                              std::to_string(hop_len));
        if (toy_sample_rate == 0) throw ConfigError("dataset: sample rate must be positive");
        if (track_len <= 0) throw ConfigError("dataset: track_len must be positive");
    }
};

/// Windows of window_len every hop_len; a trailing partial window is dropped.
inline std::vector<Segment> window_segments(std::size_t track_samples, const DatasetSpec& spec) {
    const std::size_t win = spec.window_samples(), hop = spec.hop_samples();
    std::vector<Segment> out;
    if (hop == 0) return out;
    for (std::size_t s = 0; s + win <= track_samples; s += hop) out.push_back({s, s + win});
    return out;
}

inline std::vector<Segment> window_segments(const TrackSet& t, const DatasetSpec& spec) {
    return window_segments(t.length(), spec);
}

namespace detail {

// One period of a harmonic stack, sampled for table lookup.
class Wavetable {
public:
    explicit Wavetable(const std::vector<double>& harmonic_amps) : table_(kSize + 1) {
        double peak = 0;
        for (std::size_t i = 0; i < kSize; ++i) {
            double v = 0;
            for (std::size_t h = 0; h < harmonic_amps.size(); ++h)
                v += harmonic_amps[h] * std::sin(2.0 * std::numbers::pi * static_cast<double>((h + 1) * i) / kSize);
            table_[i] = v;
            peak = std::max(peak, std::abs(v));
        }
        for (std::size_t i = 0; i < kSize; ++i) table_[i] /= (peak > 0 ? peak : 1.0);
        table_[kSize] = table_[0];
    }

    // phase in cycles
    double operator()(double phase) const {
        const double p = (phase - std::floor(phase)) * kSize;
        const auto i = static_cast<std::size_t>(p);
        const double f = p - static_cast<double>(i);
        return table_[i] + f * (table_[i + 1] - table_[i]);
    }

private:
    static constexpr std::size_t kSize = 2048;
    std::vector<double> table_;
};

inline std::vector<double> harmonics(std::size_t n, double tilt) {
    std::vector<double> a(n);
    for (std::size_t h = 0; h < n; ++h) a[h] = std::pow(1.0 / static_cast<double>(h + 1), tilt);
    return a;
}

inline double semitones(double s) { return std::pow(2.0, s / 12.0); }

// Musical scaffold shared by every track of a trackset: this is the source of
// cross-track dependence.
struct Scaffold {
    double sr = 4096;
    double beat = 0.5;                 // seconds per beat
    int key = 0;
    std::array<bool, 16> groove{};     // sixteenth-note grid over one bar
    std::vector<int> chords;           // semitone offset of each bar's chord root
    std::vector<double> bar_gain;      // shared dynamics per bar

    double bar_len() const { return 4 * beat; }
    std::size_t bar_of(double t) const {
        return std::min(chords.size() - 1, static_cast<std::size_t>(t / bar_len()));
    }
    double dynamics(double t) const {
        const double pos = t / bar_len() - 0.5;
        const auto i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(bar_gain.size() - 1)));
        const std::size_t j = std::min(i + 1, bar_gain.size() - 1);
        const double f = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
        return bar_gain[i] + f * (bar_gain[j] - bar_gain[i]);
    }
};

inline void add_note(std::vector<float>& out, double sr, double start, double dur, double freq, double amp,
                     double decay, double attack, const Wavetable& wave, double vibrato = 0.0) {
    const auto s0 = static_cast<std::size_t>(std::max(0.0, start * sr));
    const auto s1 = std::min(out.size(), static_cast<std::size_t>((start + dur) * sr));
    double phase = 0;
    for (std::size_t s = s0; s < s1; ++s) {
        const double t = static_cast<double>(s) / sr - start;
        const double env = std::min(1.0, t / attack) * std::exp(-t / decay);
        const double f = freq * (1.0 + vibrato * std::sin(2.0 * std::numbers::pi * 5.5 * t));
        phase += f / sr;
        out[s] += static_cast<float>(amp * env * wave(phase));
    }
}

inline void add_noise_hit(std::vector<float>& out, double sr, double start, double amp, double decay, double lowpass,
                          Rng& rng) {
    const auto s0 = static_cast<std::size_t>(std::max(0.0, start * sr));
    const auto s1 = std::min(out.size(), s0 + static_cast<std::size_t>(6 * decay * sr));
    double y = 0;
    for (std::size_t s = s0; s < s1; ++s) {
        const double t = static_cast<double>(s - s0) / sr;
        y += lowpass * (rng.normal() - y);
        out[s] += static_cast<float>(amp * std::exp(-t / decay) * y);
    }
}

inline std::vector<float> render_role(Role role, const Scaffold& sc, std::size_t n, Rng& rng) {
    std::vector<float> out(n, 0.0f);
    const double sr = sc.sr, dur = static_cast<double>(n) / sr;
    const double sixteenth = sc.beat / 4;
    const double bright = rng.uniform(0.8, 1.6);  // per-track timbre variation
    const auto steps = static_cast<std::size_t>(dur / sixteenth);
    switch (role) {
        case Role::bass: {
            const Wavetable w(harmonics(3, 1.5 * bright));
            for (std::size_t i = 0; i < steps; i += 2) {
                if (!sc.groove[i % 16]) continue;
                const double t = static_cast<double>(i) * sixteenth;
                const double f = 55.0 * semitones(sc.key + sc.chords[sc.bar_of(t)]);
                add_note(out, sr, t, 2 * sc.beat, f, 0.8, 0.25, 0.005, w);
            }
            break;
        }
        case Role::guitar: {
            const Wavetable w(harmonics(6, 1.0 / bright));
            constexpr std::array<int, 4> arp{0, 4, 7, 12};
            for (std::size_t i = 0; i < steps; i += 2) {
                const double t = static_cast<double>(i) * sixteenth;
                const double f = 220.0 * semitones(sc.key + sc.chords[sc.bar_of(t)] + arp[(i / 2) % 4]);
                add_note(out, sr, t, sc.beat, f, sc.groove[i % 16] ? 0.6 : 0.3, 0.15, 0.003, w);
            }
            break;
        }
        case Role::piano: {
            const Wavetable w(harmonics(4, 1.2 * bright));
            constexpr std::array<int, 3> chord{0, 4, 7};
            for (std::size_t i = 0; i < steps; i += 4) {
                if (!sc.groove[i % 16] && i % 8 != 0) continue;
                const double t = static_cast<double>(i) * sixteenth;
                for (int c : chord) {
                    const double f = 261.63 * semitones(sc.key + sc.chords[sc.bar_of(t)] + c - 12);
                    add_note(out, sr, t, 4 * sc.beat, f, 0.35, 0.6, 0.004, w);
                }
            }
            break;
        }
        case Role::drums: {
            const Wavetable sine(harmonics(1, 1.0));
            for (std::size_t i = 0; i < steps; ++i) {
                const double t = static_cast<double>(i) * sixteenth;
                if (i % 4 == 0 && sc.groove[i % 16]) add_note(out, sr, t, 0.3, 60.0 * bright, 0.9, 0.08, 0.002, sine);
                if (i % 16 == 4 || i % 16 == 12) add_noise_hit(out, sr, t, 0.5, 0.09, 0.5, rng);
                if (sc.groove[i % 16]) add_noise_hit(out, sr, t, 0.25, 0.025, 0.95, rng);
            }
            break;
        }
        case Role::vocal: {
            const Wavetable w(harmonics(5, 1.8 / bright));
            constexpr std::array<int, 5> penta{0, 2, 4, 7, 9};
            const auto beats = static_cast<std::size_t>(dur / sc.beat);
            for (std::size_t b = 0; b < beats; ++b) {
                const double t = static_cast<double>(b) * sc.beat;
                if ((b / 4) % 3 == 2) continue;  // rest every third bar
                const double f = 330.0 * semitones(sc.key + sc.chords[sc.bar_of(t)] + penta[rng.below(5)]);
                add_note(out, sr, t, sc.beat * 1.1, f, 0.55, 1.5, 0.05, w, 0.015);
            }
            break;
        }
        case Role::other: {
            const Wavetable w(harmonics(8, 0.8 * bright));
            for (std::size_t bar = 0; bar < sc.chords.size(); ++bar) {
                const double t = static_cast<double>(bar) * sc.bar_len();
                const double f = 130.81 * semitones(sc.key + sc.chords[bar]);
                add_note(out, sr, t, sc.bar_len(), f * 1.004, 0.25, 8.0, 0.2, w);
                add_note(out, sr, t, sc.bar_len(), f * 0.996, 0.25, 8.0, 0.2, w);
            }
            const double trem_rate = 1.0 / sc.beat;
            for (std::size_t s = 0; s < n; ++s)
                out[s] *= static_cast<float>(1.0 - 0.3 * (0.5 + 0.5 * std::sin(2 * std::numbers::pi * trem_rate * s / sr)));
            break;
        }
    }
    double peak = 0;
    for (float v : out) peak = std::max(peak, static_cast<double>(std::abs(v)));
    const double gain = rng.uniform(0.6, 0.9) / (peak > 0 ? peak : 1.0);
    for (std::size_t s = 0; s < n; ++s) {
        const double v = out[s] * gain * sc.dynamics(static_cast<double>(s) / sr);
        out[s] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    return out;
}

}  // namespace detail

/// Procedural multi-track: role-dependent signals sharing tempo, key, chord
/// progression, groove and bar dynamics. Pure function of (spec.seed, index).
inline TrackSet generate_trackset(const DatasetSpec& spec, std::uint64_t index) {
    spec.validate();
    if (index >= spec.n_tracksets)
        throw DataError("trackset index " + std::to_string(index) + " out of range (n_tracksets = " +
                        std::to_string(spec.n_tracksets) + ")");
    Rng rng(spec.seed, {0x7472u, index});
    TrackSet ts;
    ts.index = index;
    ts.tempo_factor = rng.uniform(0.8, 1.25);
    ts.key_index = static_cast<int>(rng.below(12));

    detail::Scaffold sc;
    sc.sr = spec.toy_sample_rate;
    sc.beat = 0.5 / ts.tempo_factor;
    sc.key = ts.key_index;
    for (std::size_t i = 0; i < 16; ++i) sc.groove[i] = (i % 8 == 0) || rng.bernoulli(0.45);
    const std::size_t n = spec.track_samples();
    const auto bars = static_cast<std::size_t>(static_cast<double>(n) / sc.sr / sc.bar_len()) + 2;
    constexpr std::array<int, 4> degrees{0, 5, 7, 9};
    double g = rng.uniform(0.5, 1.0);
    for (std::size_t b = 0; b < bars; ++b) {
        sc.chords.push_back(b % 4 == 0 ? 0 : degrees[rng.below(4)]);
        g = std::clamp(g + rng.uniform(-0.25, 0.25), 0.35, 1.0);
        sc.bar_gain.push_back(g);
    }

    // 3..6 tracks, distinct roles, at most one vocal.
    std::vector<Role> pool{Role::bass, Role::guitar, Role::piano, Role::drums, Role::other};
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
    const bool vocal = rng.bernoulli(0.5);
    const std::size_t total = 3 + rng.below(4);
    std::vector<Role> roles(pool.begin(), pool.begin() + static_cast<long>(std::min(total - (vocal ? 1 : 0), pool.size())));
    if (vocal) roles.push_back(Role::vocal);

    for (Role r : roles) {
        Rng track_rng(spec.seed, {0x7472u, index, static_cast<std::uint64_t>(r) + 1});
        ts.tracks.push_back({r, AudioBuffer{detail::render_role(r, sc, n, track_rng), spec.toy_sample_rate}});
    }
    return ts;
}

/// Context/accompaniment pairing for one window.
struct ContextAccompanimentPair {
    AudioBuffer context;
    AudioBuffer accompaniment;
    Segment segment;            // window within the trackset
    Segment style_source;       // absolute sample range, inside `segment`
    std::size_t target_track = 0;
    Role target_role = Role::bass;
    std::uint32_t context_mask = 0;  // bit i set when track i is mixed into the context
};

inline constexpr double kStyleFraction = 0.5;

/// Subset frequency of a uniformly drawn non-empty subset of n tracks: 2^(n-1) / (2^n - 1).
inline double nonempty_subset_inclusion(std::size_t n) {
    return std::ldexp(1.0, static_cast<int>(n) - 1) / (std::ldexp(1.0, static_cast<int>(n)) - 1.0);
}

inline ContextAccompanimentPair make_pair(const TrackSet& t, Segment seg, Rng& rng) {
    if (seg.end > t.length() || seg.start >= seg.end) throw DataError("make_pair: segment outside trackset");
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < t.tracks.size(); ++i)
        if (t.tracks[i].role != Role::vocal) candidates.push_back(i);
    if (candidates.empty()) throw DataError("make_pair: trackset has no non-vocal track to use as accompaniment");

    ContextAccompanimentPair p;
    p.segment = seg;
    p.target_track = candidates[rng.below(candidates.size())];
    p.target_role = t.tracks[p.target_track].role;

    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < t.tracks.size(); ++i)
        if (i != p.target_track) rest.push_back(i);
    if (!rest.empty()) {
        do {
            p.context_mask = 0;
            for (std::size_t i : rest)
                if (rng.bernoulli(0.5)) p.context_mask |= (1u << i);
        } while (p.context_mask == 0);
    }

    const std::uint32_t sr = t.tracks.front().signal.sample_rate;
    p.context.sample_rate = p.accompaniment.sample_rate = sr;
    p.context.samples.assign(seg.length(), 0.0f);
    for (std::size_t i = 0; i < t.tracks.size(); ++i) {
        if (!(p.context_mask & (1u << i))) continue;
        const auto& src = t.tracks[i].signal.samples;
        for (std::size_t s = 0; s < seg.length(); ++s) p.context.samples[s] += src[seg.start + s];
    }
    float peak = 0.0f;
    for (float v : p.context.samples) peak = std::max(peak, std::abs(v));
    if (peak > 1.0f)
        for (float& v : p.context.samples) v /= peak;

    const auto& acc = t.tracks[p.target_track].signal.samples;
    p.accompaniment.samples.assign(acc.begin() + static_cast<long>(seg.start), acc.begin() + static_cast<long>(seg.end));

    const auto style_len = static_cast<std::size_t>(std::llround(kStyleFraction * static_cast<double>(seg.length())));
    const std::size_t start = seg.start + rng.below(seg.length() - style_len + 1);
    p.style_source = {start, start + style_len};
    return p;
}

/// Samples of `buf` for an absolute range given the buffer's own absolute origin.
inline AudioBuffer slice(const AudioBuffer& buf, std::size_t origin, Segment abs) {
    if (abs.start < origin || abs.end - origin > buf.samples.size()) throw DataError("slice: range outside buffer");
    AudioBuffer out;
    out.sample_rate = buf.sample_rate;
    out.samples.assign(buf.samples.begin() + static_cast<long>(abs.start - origin),
                       buf.samples.begin() + static_cast<long>(abs.end - origin));
    return out;
}

}  // namespace darf::synth

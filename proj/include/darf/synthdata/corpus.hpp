#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "darf/binio.hpp"
#include "darf/codec/codec.hpp"
#include "darf/metrics/embedder.hpp"
#include "darf/nnkit/checkpoint.hpp"
#include "darf/parallel.hpp"
#include "darf/synthdata/dataset.hpp"

// Corpus layout (little-endian):
//   "DARC", u32 version, u64 record count,
//   spec echo: u64 n_tracksets, f64 window_len, f64 hop_len, f64 track_len, u64 seed, u32 sample_rate,
//   u32 provenance length, provenance bytes,
//   records: DARF-layout tensors "context" (F,64), "accompaniment" (F,64), "style" (64),
//            u64 trackset index, u64 segment start/end, u64 style start/end,
//            u8 target track, u8 target role, u32 context mask.

namespace darf::synth {

inline constexpr std::uint32_t kCorpusVersion = 1;

struct CorpusRecord {
    nn::Tensor<float> context;        // (frames, 64)
    nn::Tensor<float> accompaniment;  // (frames, 64)
    nn::Tensor<float> style;          // (64), unit norm
    std::uint64_t trackset_index = 0;
    Segment segment;
    Segment style_source;
    std::uint8_t target_track = 0;
    Role target_role = Role::bass;
    std::uint32_t context_mask = 0;

    friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

struct Corpus {
    DatasetSpec spec;
    std::string provenance;  // free-form "key=value" lines, e.g. codec hash
    std::vector<CorpusRecord> records;
};

inline void write_corpus(const std::filesystem::path& path, const Corpus& c) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open corpus for writing: " + path.string());
    io::put_magic(os, "DARC");
    io::put<std::uint32_t>(os, kCorpusVersion);
    io::put<std::uint64_t>(os, c.records.size());
    io::put<std::uint64_t>(os, c.spec.n_tracksets);
    io::put<double>(os, c.spec.window_len);
    io::put<double>(os, c.spec.hop_len);
    io::put<double>(os, c.spec.track_len);
    io::put<std::uint64_t>(os, c.spec.seed);
    io::put<std::uint32_t>(os, c.spec.toy_sample_rate);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.provenance.size()));
    os.write(c.provenance.data(), static_cast<std::streamsize>(c.provenance.size()));
    for (const auto& r : c.records) {
        nn::write_record(os, "context", r.context);
        nn::write_record(os, "accompaniment", r.accompaniment);
        nn::write_record(os, "style", r.style);
        io::put<std::uint64_t>(os, r.trackset_index);
        io::put<std::uint64_t>(os, r.segment.start);
        io::put<std::uint64_t>(os, r.segment.end);
        io::put<std::uint64_t>(os, r.style_source.start);
        io::put<std::uint64_t>(os, r.style_source.end);
        io::put<std::uint8_t>(os, r.target_track);
        io::put<std::uint8_t>(os, static_cast<std::uint8_t>(r.target_role));
        io::put<std::uint32_t>(os, r.context_mask);
    }
    if (!os) throw IoError("write failed: " + path.string());
}

inline Corpus read_corpus(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("cannot open corpus: " + path.string());
    io::expect_magic(is, "DARC", path.string());
    const auto version = io::get<std::uint32_t>(is);
    if (version != kCorpusVersion) throw IoError(path.string() + ": unsupported corpus version " + std::to_string(version));
    Corpus c;
    const auto count = io::get<std::uint64_t>(is);
    c.spec.n_tracksets = io::get<std::uint64_t>(is);
    c.spec.window_len = io::get<double>(is);
    c.spec.hop_len = io::get<double>(is);
    c.spec.track_len = io::get<double>(is);
    c.spec.seed = io::get<std::uint64_t>(is);
    c.spec.toy_sample_rate = io::get<std::uint32_t>(is);
    c.provenance.resize(io::get<std::uint32_t>(is));
    if (!is.read(c.provenance.data(), static_cast<std::streamsize>(c.provenance.size())))
        throw IoError(path.string() + ": truncated provenance");
    auto expect = [&](const char* name) {
        auto r = nn::read_record(is);
        if (r.name != name) throw IoError(path.string() + ": expected record '" + name + "', found '" + r.name + "'");
        return std::move(r.value);
    };
    c.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        CorpusRecord r;
        r.context = expect("context");
        r.accompaniment = expect("accompaniment");
        r.style = expect("style");
        r.trackset_index = io::get<std::uint64_t>(is);
        r.segment.start = io::get<std::uint64_t>(is);
        r.segment.end = io::get<std::uint64_t>(is);
        r.style_source.start = io::get<std::uint64_t>(is);
        r.style_source.end = io::get<std::uint64_t>(is);
        r.target_track = io::get<std::uint8_t>(is);
        const auto role = io::get<std::uint8_t>(is);
        if (role >= kRoleCount) throw IoError(path.string() + ": invalid role code " + std::to_string(role));
        r.target_role = static_cast<Role>(role);
        r.context_mask = io::get<std::uint32_t>(is);
        c.records.push_back(std::move(r));
    }
    return c;
}

/// Encoded pairs for one trackset: one pair per window.
template <class T>
std::vector<CorpusRecord> encode_trackset(const DatasetSpec& spec, std::uint64_t index, codec::CodecModel<T>& codec,
                                          const metrics::Embedder& embedder) {
    const TrackSet ts = generate_trackset(spec, index);
    const auto segs = window_segments(ts, spec);
    std::vector<CorpusRecord> out;
    if (segs.empty()) return out;
    const std::size_t W = segs.size(), N = spec.window_samples();
    if (N % codec::kHop != 0) throw ConfigError("window length must be a multiple of 4096 samples at the toy rate");
    nn::Tensor<T> ctx(nn::Shape{W, N}), acc(nn::Shape{W, N}), sty(nn::Shape{W, N / 2});
    std::vector<ContextAccompanimentPair> pairs;
    for (std::size_t w = 0; w < W; ++w) {
        Rng rng(spec.seed, {0x9a12, index, w});
        pairs.push_back(make_pair(ts, segs[w], rng));
        const auto& p = pairs.back();
        std::copy(p.context.samples.begin(), p.context.samples.end(), ctx.raw() + w * N);
        std::copy(p.accompaniment.samples.begin(), p.accompaniment.samples.end(), acc.raw() + w * N);
        const auto& src = ts.tracks[p.target_track].signal.samples;
        std::copy(src.begin() + static_cast<long>(p.style_source.start), src.begin() + static_cast<long>(p.style_source.end),
                  sty.raw() + w * (N / 2));
    }
    const auto zc = nn::cast<float>(codec::encode_batch(codec, ctx));
    const auto za = nn::cast<float>(codec::encode_batch(codec, acc));
    const auto zs = nn::cast<float>(codec::encode_batch(codec, sty));
    const std::size_t F = zc.dim(1), Fs = zs.dim(1);
    for (std::size_t w = 0; w < W; ++w) {
        CorpusRecord r;
        r.context = nn::Tensor<float>(nn::Shape{F, 64}, std::vector<float>(zc.raw() + w * F * 64, zc.raw() + (w + 1) * F * 64));
        r.accompaniment = nn::Tensor<float>(nn::Shape{F, 64}, std::vector<float>(za.raw() + w * F * 64, za.raw() + (w + 1) * F * 64));
        const auto e = embedder.embed_latents(zs.raw() + w * Fs * 64, Fs);
        r.style = nn::Tensor<float>(nn::Shape{64});
        for (std::size_t k = 0; k < 64; ++k) r.style[k] = static_cast<float>(e[k]);
        r.trackset_index = index;
        r.segment = pairs[w].segment;
        r.style_source = pairs[w].style_source;
        r.target_track = static_cast<std::uint8_t>(pairs[w].target_track);
        r.target_role = pairs[w].target_role;
        r.context_mask = pairs[w].context_mask;
        out.push_back(std::move(r));
    }
    return out;
}

/// All pairs of a dataset, encoded. A pure function of the spec, codec and
/// embedder; independent of the thread count.
template <class T>
Corpus build_corpus(const DatasetSpec& spec, codec::CodecModel<T>& codec, const metrics::Embedder& embedder,
                    std::size_t threads = 1, std::string provenance = {}) {
    spec.validate();
    std::vector<std::vector<CorpusRecord>> parts(spec.n_tracksets);
    parallel_for(spec.n_tracksets, threads, [&](std::size_t i) { parts[i] = encode_trackset(spec, i, codec, embedder); });
    Corpus c;
    c.spec = spec;
    c.provenance = std::move(provenance);
    for (auto& p : parts)
        for (auto& r : p) c.records.push_back(std::move(r));
    return c;
}

}  // namespace darf::synth

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "darf/codec/codec.hpp"
#include "darf/diffusion/trainer.hpp"
#include "darf/harness/artifacts.hpp"
#include "darf/harness/config.hpp"
#include "darf/metrics/embedder.hpp"
#include "darf/synthdata/corpus.hpp"

namespace darf::harness {

namespace fs = std::filesystem;

struct RunOptions {
    Config cfg;
    fs::path out = "runs/default";
    std::size_t threads = 1;
    bool force = false;
    std::ostream* log = nullptr;

    void note(const std::string& s) const {
        if (log) *log << s << std::endl;
    }
};

// ---------------------------------------------------------------- artifact locations

inline fs::path codec_file(const RunOptions& o) { return o.out / "codec.ckpt"; }
inline fs::path corpus_file(const RunOptions& o) { return o.out / "corpus.darc"; }
inline fs::path evalset_file(const RunOptions& o) { return o.out / "evalset.darc"; }
inline fs::path embedder_file(const RunOptions& o) { return o.out / "embedder.tensors"; }
inline fs::path reference_file(const RunOptions& o) { return o.out / "reference.tensors"; }
inline fs::path real_file(const RunOptions& o) { return o.out / "real.tensors"; }
inline fs::path ldm_file(const RunOptions& o) { return o.out / "ldm.ckpt"; }

// ---------------------------------------------------------------- stage hashes
//
// Each artifact embeds the hash of the configuration keys it depends on,
// chained through its inputs, so changing a sampling key never invalidates a
// trained model while changing a data key invalidates everything downstream.

inline std::string stage_hash(const std::string& stage, const std::string& upstream, const Config& cfg,
                              const std::vector<std::string>& prefixes) {
    return sha1_hex(stage + "\n" + upstream + "\n" + cfg.canonical(prefixes));
}

inline std::string codec_hash(const Config& c) { return stage_hash("codec", "", c, {"codec.", "data."}); }
inline std::string corpus_hash(const Config& c) {
    return stage_hash("corpus", codec_hash(c), c, {"data.", "embedder."});
}
inline std::string evalset_hash(const Config& c) {
    return stage_hash("evalset", codec_hash(c), c,
                      {"eval.tracksets", "eval.seed", "eval.reference", "data.window", "data.hop", "data.track_len",
                       "embedder."});
}
inline std::string ldm_hash(const Config& c) { return stage_hash("ldm", corpus_hash(c), c, {"ldm."}); }

inline std::string provenance_text(const std::string& hash, const Config& cfg) {
    return "hash=" + hash + "\n" + cfg.canonical();
}

inline std::string provenance_hash(const std::string& text) {
    if (text.rfind("hash=", 0) != 0) return "";
    return text.substr(5, text.find('\n') - 5);
}

// ---------------------------------------------------------------- dataset specs

inline synth::DatasetSpec train_spec(const Config& c) {
    synth::DatasetSpec s;
    s.n_tracksets = c.integer("data.tracksets");
    s.seed = c.integer("data.seed");
    s.window_len = c.number("data.window");
    s.hop_len = c.number("data.hop");
    s.track_len = c.number("data.track_len");
    s.validate();
    return s;
}

inline synth::DatasetSpec eval_spec(const Config& c) {
    synth::DatasetSpec s = train_spec(c);
    s.n_tracksets = c.integer("eval.tracksets");
    s.seed = c.integer("eval.seed");
    if (s.seed == c.integer("data.seed")) throw ConfigError("eval.seed must differ from data.seed (held-out data)");
    return s;
}

inline std::size_t window_frames(const Config& c) {
    const auto n = train_spec(c).window_samples();
    if (n % codec::kHop != 0) throw ConfigError("data.window must be a whole number of 4096-sample frames");
    return n / codec::kHop;
}

// ---------------------------------------------------------------- codec

inline codec::CodecModel<float> load_codec(const RunOptions& o, const fs::path& path) {
    const auto recs = nn::load_checkpoint(path);
    const TensorFile f{recs};
    check_provenance(path.string(), f.text_or("hash", "none"), codec_hash(o.cfg), o.force);
    return codec::CodecModel<float>::load(recs);
}

/// Consistency-trains the codec on crops of training windows (full mixes with
/// probability codec.mix_prob, single accompaniment tracks otherwise) and
/// returns the EMA teacher, which is the smoother of the two networks.
/// `monitor`, when set, runs once before training (step 0) and after every
/// step with the 1-based step count.
inline codec::CodecModel<float> train_codec(
    const RunOptions& o, const std::function<void(std::size_t, codec::ConsistencyTrainer<float>&)>& monitor = {}) {
    const Config& c = o.cfg;
    codec::CodecConfig cc;
    cc.width = c.integer("codec.width");
    cc.blocks = c.integer("codec.blocks");
    cc.seed = c.integer("codec.seed");
    codec::CodecModel<float> m(cc);
    codec::ConsistencyTrainConfig tc;
    tc.lr = c.number("codec.lr");
    tc.ema_teacher_momentum = c.number("codec.teacher");
    if (!(tc.lr > 0) || !(tc.ema_teacher_momentum >= 0 && tc.ema_teacher_momentum < 1))
        throw ConfigError("codec: need lr > 0 and teacher momentum in [0, 1)");
    codec::ConsistencyTrainer<float> tr(m, tc, cc.seed);

    const auto spec = train_spec(c);
    const std::size_t n = std::min<std::uint64_t>(c.integer("codec.tracksets"), spec.n_tracksets);
    const std::size_t B = c.integer("codec.batch"), crop = c.integer("codec.crop_frames") * codec::kHop;
    const std::size_t win = spec.window_samples();
    const double mix = c.number("codec.mix_prob");
    if (n == 0 || B == 0 || crop == 0 || crop > win) throw ConfigError("codec: need tracksets, batch > 0 and 0 < crop <= window");
    std::vector<synth::TrackSet> sets(n);
    parallel_for(n, o.threads, [&](std::size_t i) { sets[i] = synth::generate_trackset(spec, i); });

    Rng rng(cc.seed, {0xc0d1});
    const std::size_t steps = c.integer("codec.steps");
    double acc = 0;
    if (monitor) monitor(0, tr);
    for (std::size_t s = 0; s < steps; ++s) {
        nn::Tensor<float> audio(nn::Shape{B, crop});
        for (std::size_t b = 0; b < B; ++b) {
            const auto& ts = sets[rng.below(n)];
            const auto segs = synth::window_segments(ts, spec);
            const auto pair = synth::make_pair(ts, segs[rng.below(segs.size())], rng);
            const auto& src = rng.bernoulli(mix) ? pair.context.samples : pair.accompaniment.samples;
            const std::size_t off = rng.below(win - crop + 1);
            std::copy_n(src.begin() + static_cast<long>(off), crop, audio.raw() + b * crop);
        }
        acc += tr.step(audio);
        if (monitor) monitor(s + 1, tr);
        if ((s + 1) % 250 == 0) {
            std::ostringstream ss;
            ss << "codec step " << s + 1 << " loss " << std::setprecision(5) << acc / 250.0;
            o.note(ss.str());
            acc = 0;
        }
    }
    return tr.teacher();
}

inline void save_codec(const RunOptions& o, codec::CodecModel<float>& m, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    m.save(path, {{"meta/hash", text_tensor(codec_hash(o.cfg))}, {"meta/config", text_tensor(o.cfg.canonical())}});
}

// ---------------------------------------------------------------- embedder

inline metrics::Embedder make_embedder(const Config& c) { return metrics::Embedder(c.integer("embedder.seed")); }

/// Embedder with its description head read from the datagen output.
inline metrics::Embedder load_embedder(const RunOptions& o, const fs::path& path) {
    const auto f = TensorFile::load(path);
    check_provenance(path.string(), f.text_or("hash", "none"), evalset_hash(o.cfg), o.force);
    const auto& d = f.get("descriptions", path.string());
    if (d.shape() != nn::Shape{synth::kRoleCount, metrics::kEmbedDim})
        throw DimensionError(path.string() + ": description head has shape " + nn::to_string(d.shape()));
    metrics::Embedder e = make_embedder(o.cfg);
    std::vector<metrics::Vec> rows;
    for (std::size_t r = 0; r < synth::kRoleCount; ++r) rows.emplace_back(d.raw() + r * metrics::kEmbedDim, d.raw() + (r + 1) * metrics::kEmbedDim);
    e.set_descriptions(std::move(rows));
    return e;
}

// ---------------------------------------------------------------- corpora

inline synth::Corpus load_corpus(const RunOptions& o, const fs::path& path, const std::string& expected) {
    auto c = synth::read_corpus(path);
    check_provenance(path.string(), provenance_hash(c.provenance), expected, o.force);
    return c;
}

/// Stacks a field of records [begin, begin + n) into (n, F, 64) or (n, 64).
inline nn::Tensor<float> stack(const std::vector<synth::CorpusRecord>& recs, std::size_t begin, std::size_t n,
                               nn::Tensor<float> synth::CorpusRecord::*field) {
    if (begin + n > recs.size()) throw DataError("stack: range exceeds record count");
    if (n == 0) throw DataError("stack: empty range");
    const nn::Shape& s = (recs[begin].*field).shape();
    nn::Shape out{n};
    out.insert(out.end(), s.begin(), s.end());
    nn::Tensor<float> t(out);
    const std::size_t per = nn::numel(s);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = recs[begin + i].*field;
        if (v.shape() != s) throw DimensionError("stack: records have differing shapes");
        std::copy_n(v.raw(), per, t.raw() + i * per);
    }
    return t;
}

inline nn::Tensor<float> description_rows(const std::vector<synth::CorpusRecord>& recs, std::size_t begin, std::size_t n,
                                          const metrics::Embedder& e) {
    nn::Tensor<float> t(nn::Shape{n, metrics::kEmbedDim});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = e.describe(recs[begin + i].target_role);
        for (std::size_t k = 0; k < metrics::kEmbedDim; ++k) t.at(i, k) = static_cast<float>(d[k]);
    }
    return t;
}

/// Training corpus, held-out evaluation set, the embedder's description head,
/// and the reference / real tensor files used by eval.
inline void run_datagen(const RunOptions& o, const fs::path& codec_path) {
    const Config& c = o.cfg;
    auto codec = load_codec(o, codec_path);
    const metrics::Embedder plain = make_embedder(c);
    fs::create_directories(o.out);

    o.note("datagen: training corpus");
    const auto train = synth::build_corpus(train_spec(c), codec, plain, o.threads, provenance_text(corpus_hash(c), c));
    synth::write_corpus(corpus_file(o), train);

    o.note("datagen: held-out set");
    const auto ev = synth::build_corpus(eval_spec(c), codec, plain, o.threads, provenance_text(evalset_hash(c), c));
    const std::size_t R = c.integer("eval.reference");
    if (R < 2 || ev.records.size() <= R)
        throw ConfigError("eval.tracksets gives " + std::to_string(ev.records.size()) + " windows; need more than eval.reference = " +
                          std::to_string(R));
    synth::write_corpus(evalset_file(o), ev);

    metrics::Embedder e = make_embedder(c);
    e.build_descriptions(codec);
    const std::string h = evalset_hash(c);
    TensorFile emb;
    nn::Tensor<float> d(nn::Shape{synth::kRoleCount, metrics::kEmbedDim});
    for (std::size_t r = 0; r < synth::kRoleCount; ++r)
        for (std::size_t k = 0; k < metrics::kEmbedDim; ++k) d.at(r, k) = static_cast<float>(e.descriptions()[r][k]);
    emb.put("descriptions", std::move(d));
    emb.put_text("hash", h);
    emb.put_text("config", c.canonical());
    emb.save(embedder_file(o));

    TensorFile ref;
    ref.put("samples", stack(ev.records, 0, R, &synth::CorpusRecord::accompaniment));
    ref.put("contexts", stack(ev.records, 0, R, &synth::CorpusRecord::context));
    ref.put_text("hash", h);
    ref.put_text("mode", "reference");
    ref.put_text("config", c.canonical());
    ref.save(reference_file(o));

    const std::size_t P = ev.records.size() - R;
    TensorFile real;
    real.put("samples", stack(ev.records, R, P, &synth::CorpusRecord::accompaniment));
    real.put("contexts", stack(ev.records, R, P, &synth::CorpusRecord::context));
    real.put("descriptions", description_rows(ev.records, R, P, e));
    real.put_text("reference", h);
    real.put_text("mode", "real");
    real.put_text("config", c.canonical());
    real.save(real_file(o));
    o.note("datagen: " + std::to_string(train.records.size()) + " training pairs, " + std::to_string(R) +
           " reference windows, " + std::to_string(P) + " prompt windows");
}

// ---------------------------------------------------------------- diffusion model

inline double corpus_sigma_data(const synth::Corpus& c) {
    double ss = 0;
    std::size_t n = 0;
    for (const auto& r : c.records) {
        for (float v : r.accompaniment.data()) ss += double(v) * v;
        n += r.accompaniment.size();
    }
    if (n == 0 || !(ss > 0)) throw DataError("corpus has no accompaniment energy to estimate sigma_data from");
    return std::sqrt(ss / double(n));
}

inline diffusion::DenoiserModel<float> train_ldm(const RunOptions& o, const synth::Corpus& corpus,
                                                 std::vector<double>* loss_curve = nullptr) {
    const Config& c = o.cfg;
    if (corpus.records.empty()) throw DataError("training corpus is empty");
    diffusion::DenoiserConfig dc;
    dc.width = c.integer("ldm.width");
    dc.blocks = c.integer("ldm.blocks");
    dc.embed = c.integer("ldm.embed");
    dc.seed = c.integer("ldm.seed");
    dc.sigma_data = c.str("ldm.sigma_data") == "auto" ? corpus_sigma_data(corpus) : c.number("ldm.sigma_data");
    diffusion::DenoiserModel<float> m(dc);
    diffusion::TrainConfig tc;
    tc.lr = c.number("ldm.lr");
    tc.warmup_steps = c.integer("ldm.warmup");
    tc.weight_decay = c.number("ldm.weight_decay");
    tc.ema = c.number("ldm.ema");
    tc.p_drop_context = c.number("ldm.p_drop_context");
    tc.p_drop_style = c.number("ldm.p_drop_style");
    diffusion::Trainer<float> tr(m, tc, dc.seed);

    const std::size_t N = corpus.records.size(), B = c.integer("ldm.batch"), steps = c.integer("ldm.steps");
    if (B == 0) throw ConfigError("ldm.batch must be positive");
    const auto& first = corpus.records.front();
    const std::size_t F = first.accompaniment.dim(0);
    Rng pick(dc.seed, {0xba7c4});
    double acc = 0;
    std::size_t since = 0;
    for (std::size_t s = 0; s < steps; ++s) {
        diffusion::TrainBatch b{nn::Tensor<float>(nn::Shape{B, F, diffusion::kLatent}),
                                nn::Tensor<float>(nn::Shape{B, F, diffusion::kLatent}),
                                nn::Tensor<float>(nn::Shape{B, diffusion::kStyle})};
        for (std::size_t i = 0; i < B; ++i) {
            const auto& r = corpus.records[pick.below(N)];
            std::copy_n(r.accompaniment.raw(), F * diffusion::kLatent, b.target.raw() + i * F * diffusion::kLatent);
            std::copy_n(r.context.raw(), F * diffusion::kLatent, b.context.raw() + i * F * diffusion::kLatent);
            std::copy_n(r.style.raw(), diffusion::kStyle, b.style.raw() + i * diffusion::kStyle);
        }
        const double l = tr.step(b);
        if (std::isfinite(l)) acc += l, ++since;
        if ((s + 1) % 1000 == 0 || s + 1 == steps) {
            const double avg = since ? acc / double(since) : std::nan("");
            if (loss_curve) loss_curve->push_back(avg);
            std::ostringstream ss;
            ss << "ldm step " << s + 1 << " loss " << std::setprecision(5) << avg;
            o.note(ss.str());
            acc = 0;
            since = 0;
        }
    }
    if (tr.skipped() * 10 > std::max<std::size_t>(steps, 1))
        throw NumericalError("ldm training skipped " + std::to_string(tr.skipped()) + " of " + std::to_string(steps) +
                             " steps on non-finite losses");
    // Sampling uses the EMA weights.
    const auto ps = m.params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = tr.ema().shadow[i];
    return m;
}

inline void save_ldm(const RunOptions& o, diffusion::DenoiserModel<float>& m, const fs::path& path,
                     const std::vector<double>& loss_curve) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    nn::Tensor<float> curve(nn::Shape{loss_curve.size()});
    for (std::size_t i = 0; i < loss_curve.size(); ++i) curve[i] = static_cast<float>(loss_curve[i]);
    m.save(path, nullptr,
           {{"meta/hash", text_tensor(ldm_hash(o.cfg))},
            {"meta/config", text_tensor(o.cfg.canonical())},
            {"meta/loss_per_1000", std::move(curve)}});
}

inline diffusion::DenoiserModel<float> load_ldm(const RunOptions& o, const fs::path& path) {
    const auto recs = nn::load_checkpoint(path);
    const TensorFile f{recs};
    check_provenance(path.string(), f.text_or("hash", "none"), ldm_hash(o.cfg), o.force);
    return diffusion::DenoiserModel<float>::load(recs, true);
}

}  // namespace darf::harness

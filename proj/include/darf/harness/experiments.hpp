#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "darf/diffusion/sampler.hpp"
#include "darf/harness/pipeline.hpp"
#include "darf/metrics/report.hpp"

namespace darf::harness {

// ---------------------------------------------------------------- conditional modes

enum class Mode { full, context_only, style_only, description_context, description_only, uncond };

inline constexpr std::array<Mode, 6> kAllModes{Mode::full,        Mode::description_context, Mode::context_only,
                                               Mode::style_only,  Mode::uncond,              Mode::description_only};

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::context_only: return "context-only";
        case Mode::style_only: return "style-only";
        case Mode::description_context: return "description-context";
        case Mode::description_only: return "description-only";
        case Mode::uncond: return "uncond";
    }
    return "?";
}

/// Legend of the steps-only figure for each mode.
inline std::string mode_label(Mode m) {
    switch (m) {
        case Mode::full: return "style(audio)+context";
        case Mode::context_only: return "context only";
        case Mode::style_only: return "style(audio) only";
        case Mode::description_context: return "style(description)+context";
        case Mode::description_only: return "style(description) only";
        case Mode::uncond: return "no conditioning";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (Mode m : kAllModes)
        if (mode_name(m) == s) return m;
    throw ConfigError("unknown conditional mode '" + s +
                      "' (expected full, context-only, style-only, description-context, description-only or uncond)");
}

inline bool uses_context(Mode m) {
    return m == Mode::full || m == Mode::context_only || m == Mode::description_context;
}
inline bool uses_style(Mode m) { return m == Mode::full || m == Mode::style_only; }
inline bool uses_description(Mode m) { return m == Mode::description_context || m == Mode::description_only; }

// ---------------------------------------------------------------- prompts

/// Conditioning material for generation: the held-out windows after the
/// reference block, with their real accompaniments for the Real row.
struct Prompts {
    nn::Tensor<float> contexts;      // (P, F, 64)
    nn::Tensor<float> styles;        // (P, 64)
    nn::Tensor<float> descriptions;  // (P, 64)
    nn::Tensor<float> real;          // (P, F, 64)
    std::size_t size() const { return contexts.dim(0); }
};

inline Prompts load_prompts(const RunOptions& o, const metrics::Embedder& e) {
    const auto ev = load_corpus(o, evalset_file(o), evalset_hash(o.cfg));
    const std::size_t R = o.cfg.integer("eval.reference");
    if (ev.records.size() <= R) throw ConfigError("held-out set has no prompt windows beyond the reference block");
    const std::size_t P = ev.records.size() - R;
    return {stack(ev.records, R, P, &synth::CorpusRecord::context), stack(ev.records, R, P, &synth::CorpusRecord::style),
            description_rows(ev.records, R, P, e), stack(ev.records, R, P, &synth::CorpusRecord::accompaniment)};
}

inline nn::Tensor<float> head_rows(const nn::Tensor<float>& t, std::size_t n) {
    nn::Shape s = t.shape();
    if (s.at(0) < n) throw ConfigError("requested " + std::to_string(n) + " items but only " + std::to_string(s[0]) + " are available");
    const std::size_t per = t.size() / s[0];
    s[0] = n;
    return nn::Tensor<float>(s, std::vector<float>(t.raw(), t.raw() + n * per));
}

// ---------------------------------------------------------------- generation

struct GridPoint {
    Mode mode = Mode::full;
    std::size_t T = 30;
    double cfg_context = 1.0;
    double cfg_style = 1.0;
    std::uint64_t seed = 1;

    auto key() const { return std::make_tuple(static_cast<int>(mode), T, cfg_context, cfg_style, seed); }
    friend bool operator<(const GridPoint& a, const GridPoint& b) { return a.key() < b.key(); }
};

inline diffusion::SamplerConfig sampler_config(const Config& c, std::size_t T, std::uint64_t seed) {
    diffusion::SamplerConfig s;
    s.schedule = diffusion::build_schedule(c.number("sample.sigma_min"), c.number("sample.sigma_max"), T,
                                           c.number("sample.rho"));
    s.stochasticity = c.number("sample.stochasticity");
    s.second_order = c.flag("sample.second_order");
    s.stereo_width = c.number("sample.stereo_width");
    s.seed = seed;
    s.chunk = c.integer("sample.chunk");
    return s;
}

inline diffusion::ConditioningBundle conditioning(const Prompts& p, std::size_t n, const GridPoint& g) {
    diffusion::ConditioningBundle b;
    if (uses_context(g.mode)) b.context = head_rows(p.contexts, n);
    if (uses_style(g.mode)) b.style = head_rows(p.styles, n);
    if (uses_description(g.mode)) b.style = head_rows(p.descriptions, n);
    b.cfg_context = g.cfg_context;
    b.cfg_style = g.cfg_style;
    return b;
}

/// Plain (mono) generation for the first n prompts.
inline nn::Tensor<float> generate(const diffusion::Denoiser& model, const Prompts& p, std::size_t n, const Config& c,
                                  const GridPoint& g, std::size_t threads = 1) {
    auto sc = sampler_config(c, g.T, g.seed);
    sc.stereo_width = 0.0;
    sc.threads = threads;
    return diffusion::sample(conditioning(p, n, g), sc, model, nn::Shape{n, p.contexts.dim(1), diffusion::kLatent});
}

// ---------------------------------------------------------------- evaluation

inline metrics::EmbeddingSet embed_set(const metrics::Embedder& e, const nn::Tensor<float>& z) {
    metrics::EmbeddingSet s;
    s.rows = e.embed_batch(z);
    return s;
}

inline metrics::EmbeddingSet rows_set(const nn::Tensor<float>& t) {
    metrics::EmbeddingSet s;
    const std::size_t d = t.dim(1);
    for (std::size_t i = 0; i < t.dim(0); ++i) s.rows.emplace_back(t.raw() + i * d, t.raw() + (i + 1) * d);
    return s;
}

inline metrics::EvalOptions eval_options(const Config& c) {
    metrics::EvalOptions o;
    o.batches = c.integer("eval.batches");
    o.batch_size = c.integer("eval.batch_size");
    if (o.batches != 5) throw ConfigError("eval.batches is fixed at 5");
    if (o.batch_size == 0) throw ConfigError("eval.batch_size must be positive");
    return o;
}

inline std::size_t candidate_count(const Config& c) { return 5 * c.integer("eval.batch_size"); }

/// Metric report of generated latents against the reference set. Contexts
/// enable adherence, descriptions enable the description score.
inline metrics::MetricReport score(const metrics::EvalReference& ref, const metrics::Embedder& e,
                                   const nn::Tensor<float>& gen, const nn::Tensor<float>* contexts,
                                   const nn::Tensor<float>* descriptions, const metrics::EvalOptions& opt) {
    metrics::EvalCandidates cand;
    cand.audio = embed_set(e, gen);
    if (contexts) cand.contexts = embed_set(e, *contexts);
    if (descriptions) cand.descriptions = rows_set(*descriptions);
    return metrics::evaluate(ref, cand, opt);
}

inline std::unique_ptr<metrics::EvalReference> load_reference(const RunOptions& o, const metrics::Embedder& e,
                                                              const fs::path& path) {
    const auto f = TensorFile::load(path);
    check_provenance(path.string(), f.text_or("hash", "none"), evalset_hash(o.cfg), o.force);
    return std::make_unique<metrics::EvalReference>(embed_set(e, f.get("samples", path.string())),
                                                    embed_set(e, f.get("contexts", path.string())),
                                                    o.cfg.integer("eval.k"));
}

inline nlohmann::ordered_json report_json(const metrics::MetricReport& r) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const char* k : {"mmd2", "fd", "density", "coverage", "apa", "cs"}) {
        if (!r.has(k)) continue;
        const auto& v = r.metrics.at(k);
        j[k] = {{"value", v.value}, {"batches", v.batches}, {"ci95", v.ci95}};
    }
    return j;
}

inline std::string fmt(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

inline void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + p.string());
    os << s;
}

/// JSON {metric: {value, batches, ci95}} next to a one-line-per-metric CSV.
inline void write_report(const fs::path& json_path, const metrics::MetricReport& r, const std::string& provenance) {
    auto j = report_json(r);
    write_text(json_path, j.dump(2) + "\n");
    std::string csv = "metric,value,ci95," ;
    for (std::size_t b = 0; b < r.batch_count; ++b) csv += "batch" + std::to_string(b) + (b + 1 < r.batch_count ? "," : "\n");
    for (const auto& [k, v] : r.metrics) {
        csv += k + "," + fmt(v.value, 10) + "," + fmt(v.ci95, 10);
        for (double b : v.batches) csv += "," + fmt(b, 10);
        csv += "\n";
    }
    fs::path csv_path = json_path;
    csv_path.replace_extension(".csv");
    write_text(csv_path, csv);
    fs::path prov = json_path;
    prov.replace_extension(".provenance.txt");
    write_text(prov, provenance);
}

// ---------------------------------------------------------------- sweep

struct SweepRow {
    GridPoint point;
    metrics::MetricReport report;

    std::optional<double> metric(const std::string& k) const {
        if (!report.has(k)) return std::nullopt;
        return report.value(k);
    }
};

/// Everything a grid evaluation needs, loaded once.
struct Bench {
    const RunOptions& opts;
    metrics::Embedder embedder;
    Prompts prompts;
    std::unique_ptr<metrics::EvalReference> reference;
    diffusion::DenoiserModel<float> model;
    std::unique_ptr<diffusion::ModelDenoiser> denoiser;

    explicit Bench(const RunOptions& o)
        : opts(o),
          embedder(load_embedder(o, embedder_file(o))),
          prompts(load_prompts(o, embedder)),
          reference(load_reference(o, embedder, reference_file(o))),
          model(load_ldm(o, ldm_file(o))) {
        denoiser = std::make_unique<diffusion::ModelDenoiser>(model);
        if (prompts.size() < candidate_count(o.cfg))
            throw ConfigError("held-out set has " + std::to_string(prompts.size()) + " prompt windows, evaluation needs " +
                              std::to_string(candidate_count(o.cfg)));
    }

    SweepRow run(const GridPoint& g, std::size_t threads = 1) const {
        const std::size_t n = candidate_count(opts.cfg);
        const auto gen = generate(*denoiser, prompts, n, opts.cfg, g, threads);
        const auto ctx = head_rows(prompts.contexts, n);
        const auto desc = head_rows(prompts.descriptions, n);
        return {g, score(*reference, embedder, gen, uses_context(g.mode) ? &ctx : nullptr,
                         uses_description(g.mode) ? &desc : nullptr, eval_options(opts.cfg))};
    }
};

/// Evaluates every point (deduplicated) on a worker pool; rows come back in
/// the order of `points`.
inline std::vector<SweepRow> run_points(const Bench& bench, const std::vector<GridPoint>& points, std::size_t threads,
                                        const fs::path& point_dir = {}) {
    std::vector<GridPoint> unique(points.begin(), points.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end(), [](const GridPoint& a, const GridPoint& b) { return !(a < b) && !(b < a); }),
                 unique.end());
    std::vector<std::optional<SweepRow>> done(unique.size());
    parallel_for(unique.size(), threads, [&](std::size_t i) {
        done[i] = bench.run(unique[i]);
        if (!point_dir.empty()) {
            const auto& g = unique[i];
            const std::string name = mode_name(g.mode) + "_T" + std::to_string(g.T) + "_cc" + fmt(g.cfg_context) + "_cs" +
                                     fmt(g.cfg_style) + "_s" + std::to_string(g.seed) + ".json";
            write_text(point_dir / name, report_json(done[i]->report).dump(2) + "\n");
        }
        if (bench.opts.log) bench.opts.note("point " + mode_name(unique[i].mode) + " T=" + std::to_string(unique[i].T) +
                                            " cfg=" + fmt(unique[i].cfg_context) + "/" + fmt(unique[i].cfg_style) +
                                            " seed=" + std::to_string(unique[i].seed) +
                                            " mmd2=" + fmt(done[i]->report.value("mmd2")));
    });
    std::vector<SweepRow> out;
    for (const auto& p : points) {
        const auto it = std::lower_bound(unique.begin(), unique.end(), p);
        out.push_back(*done[static_cast<std::size_t>(it - unique.begin())]);
    }
    return out;
}

inline std::vector<GridPoint> sweep_grid(const Config& c) {
    std::vector<GridPoint> g;
    for (const auto& m : c.words("sweep.modes"))
        for (auto T : c.integers("sweep.T"))
            for (double w : c.numbers("sweep.cfg"))
                for (auto s : c.integers("sweep.seeds")) g.push_back({parse_mode(m), T, w, w, s});
    return g;
}

/// Steps-only sub-sweep: every mode at unit guidance.
inline std::vector<GridPoint> fig2_grid(const Config& c) {
    std::vector<GridPoint> g;
    for (const auto& m : c.words("sweep.fig2_modes"))
        for (auto T : c.integers("sweep.T"))
            for (auto s : c.integers("sweep.seeds")) g.push_back({parse_mode(m), T, 1.0, 1.0, s});
    return g;
}

inline const std::vector<std::string>& metric_columns() {
    static const std::vector<std::string> k{"mmd2", "fd", "density", "coverage", "apa", "cs"};
    return k;
}

inline std::string rows_csv(const std::vector<SweepRow>& rows) {
    std::string s = "mode,T,cfg_context,cfg_style,seed";
    for (const auto& k : metric_columns()) s += "," + k;
    s += "\n";
    for (const auto& r : rows) {
        s += mode_name(r.point.mode) + "," + std::to_string(r.point.T) + "," + fmt(r.point.cfg_context) + "," +
             fmt(r.point.cfg_style) + "," + std::to_string(r.point.seed);
        for (const auto& k : metric_columns()) {
            const auto v = r.metric(k);
            s += "," + (v ? fmt(*v, 10) : std::string());
        }
        s += "\n";
    }
    return s;
}

/// Rows with the smallest MMD²; the first in row order wins ties.
inline const SweepRow& best_row(const std::vector<SweepRow>& rows) {
    if (rows.empty()) throw DataError("best_row: no rows");
    return *std::min_element(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.report.value("mmd2") < b.report.value("mmd2");
    });
}

struct RankedConfig {
    Mode mode;
    std::size_t T;
    double cfg_context, cfg_style;
    double median_mmd2;
    std::size_t seeds;
};

/// Grid configurations ranked by median MMD² over seeds (ascending, stable).
inline std::vector<RankedConfig> rank_configs(const std::vector<SweepRow>& rows) {
    std::map<std::tuple<int, std::size_t, double, double>, std::vector<double>> by;
    std::vector<std::tuple<int, std::size_t, double, double>> order;
    for (const auto& r : rows) {
        const auto k = std::make_tuple(static_cast<int>(r.point.mode), r.point.T, r.point.cfg_context, r.point.cfg_style);
        if (!by.count(k)) order.push_back(k);
        by[k].push_back(r.report.value("mmd2"));
    }
    std::vector<RankedConfig> out;
    for (const auto& k : order)
        out.push_back({static_cast<Mode>(std::get<0>(k)), std::get<1>(k), std::get<2>(k), std::get<3>(k),
                       metrics::median(by[k]), by[k].size()});
    std::stable_sort(out.begin(), out.end(), [](const RankedConfig& a, const RankedConfig& b) { return a.median_mmd2 < b.median_mmd2; });
    return out;
}

inline void run_sweep(const RunOptions& o, const fs::path& dir) {
    const Bench bench(o);
    const auto grid = sweep_grid(o.cfg), fig2 = fig2_grid(o.cfg);
    std::vector<GridPoint> all = grid;
    all.insert(all.end(), fig2.begin(), fig2.end());
    const auto rows = run_points(bench, all, o.threads, dir / "points");
    const std::vector<SweepRow> grid_rows(rows.begin(), rows.begin() + static_cast<long>(grid.size()));
    const std::vector<SweepRow> fig2_rows(rows.begin() + static_cast<long>(grid.size()), rows.end());
    write_text(dir / "sweep.csv", rows_csv(grid_rows));
    write_text(dir / "fig2_points.csv", rows_csv(fig2_rows));
    std::string ranked = "rank,mode,T,cfg_context,cfg_style,median_mmd2,seeds\n";
    const auto rc = rank_configs(grid_rows);
    for (std::size_t i = 0; i < rc.size(); ++i)
        ranked += std::to_string(i + 1) + "," + mode_name(rc[i].mode) + "," + std::to_string(rc[i].T) + "," +
                  fmt(rc[i].cfg_context) + "," + fmt(rc[i].cfg_style) + "," + fmt(rc[i].median_mmd2, 10) + "," +
                  std::to_string(rc[i].seeds) + "\n";
    write_text(dir / "sweep_ranked.csv", ranked);
    const auto& best = best_row(grid_rows);
    nlohmann::ordered_json bj = {{"mode", mode_name(best.point.mode)},
                                 {"T", best.point.T},
                                 {"cfg_context", best.point.cfg_context},
                                 {"cfg_style", best.point.cfg_style},
                                 {"seed", best.point.seed},
                                 {"metrics", report_json(best.report)}};
    write_text(dir / "best.json", bj.dump(2) + "\n");
    write_text(dir / "config.txt", o.cfg.canonical());
}

// ---------------------------------------------------------------- table 1

/// Encode → decode → encode of white noise: the codec's view of pure noise.
inline nn::Tensor<float> noise_floor_latents(codec::CodecModel<float>& codec, std::size_t n, std::size_t frames,
                                             double render_t, std::uint64_t seed, std::size_t threads) {
    nn::Tensor<float> out(nn::Shape{n, frames, codec::kChannels});
    const std::size_t chunk = 16, N = frames * codec::kHop, per = frames * codec::kChannels;
    parallel_for((n + chunk - 1) / chunk, threads, [&](std::size_t c) {
        const std::size_t lo = c * chunk, m = std::min(chunk, n - lo);
        nn::Tensor<float> audio(nn::Shape{m, N});
        for (std::size_t b = 0; b < m; ++b) {
            Rng r(seed, {0x401e, lo + b});
            for (std::size_t i = 0; i < N; ++i) audio.at(b, i) = static_cast<float>(std::clamp(0.3 * r.normal(), -1.0, 1.0));
        }
        const auto z = codec::encode_batch(codec, audio);
        const auto y = codec::decode_batch(codec, z, render_t, seed + lo);
        const auto z2 = codec::encode_batch(codec, y);
        std::copy_n(z2.raw(), m * per, out.raw() + lo * per);
    });
    return out;
}

struct Table1Row {
    std::string name;
    metrics::MetricReport report;
};

inline std::string table1_markdown(const std::vector<std::pair<std::string, std::vector<Table1Row>>>& blocks) {
    // Column order follows the published table.
    const std::vector<std::pair<std::string, std::string>> cols{{"mmd2", "MMD²"},     {"fd", "FD"},
                                                                {"coverage", "Coverage"}, {"density", "Density"},
                                                                {"apa", "APA (stand-in)"}, {"cs", "CS (stand-in)"}};
    std::string s;
    for (const auto& [title, rows] : blocks) {
        s += "### " + title + "\n\n| Model |";
        for (const auto& c : cols) s += " " + c.second + " |";
        s += "\n|---|";
        for (std::size_t i = 0; i < cols.size(); ++i) s += "---:|";
        s += "\n";
        for (const auto& r : rows) {
            s += "| " + r.name + " |";
            for (const auto& c : cols) {
                if (r.report.has(c.first)) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, " %.4f |", r.report.value(c.first));
                    s += buf;
                } else {
                    s += "  |";
                }
            }
            s += "\n";
        }
        s += "\n";
    }
    return s;
}

inline void run_table1(const RunOptions& o, const fs::path& dir) {
    const Bench bench(o);
    const std::size_t n = candidate_count(o.cfg);
    const auto opt = eval_options(o.cfg);
    const auto ctx = head_rows(bench.prompts.contexts, n);
    const auto desc = head_rows(bench.prompts.descriptions, n);
    auto codec = load_codec(o, codec_file(o));

    std::vector<Table1Row> fixed;
    fixed.push_back({"Real", score(*bench.reference, bench.embedder, head_rows(bench.prompts.real, n), &ctx, &desc, opt)});
    const auto noise = noise_floor_latents(codec, n, bench.prompts.contexts.dim(1), o.cfg.number("codec.render_t"),
                                           o.cfg.integer("sample.seed"), o.threads);
    fixed.push_back({"Lower bound (codec-decoded noise)", score(*bench.reference, bench.embedder, noise, &ctx, &desc, opt)});

    const std::vector<std::pair<std::size_t, double>> configs{{30, 1.25}, {10, 1.0}};
    std::vector<GridPoint> points;
    for (const auto& [T, w] : configs)
        for (Mode m : kAllModes) points.push_back({m, T, w, w, o.cfg.integer("sample.seed")});
    const auto rows = run_points(bench, points, o.threads);

    std::vector<std::pair<std::string, std::vector<Table1Row>>> blocks;
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    std::string csv = "configuration,row";
    for (const auto& k : metric_columns()) csv += "," + k;
    csv += "\n";
    for (std::size_t c = 0; c < configs.size(); ++c) {
        const std::string title = "T=" + std::to_string(configs[c].first) + ", CFG=" + fmt(configs[c].second);
        std::vector<Table1Row> block = fixed;
        for (std::size_t m = 0; m < kAllModes.size(); ++m)
            block.push_back({mode_label(kAllModes[m]), rows[c * kAllModes.size() + m].report});
        for (const auto& r : block) {
            j[title][r.name] = report_json(r.report);
            csv += "\"" + title + "\",\"" + r.name + "\"";
            for (const auto& k : metric_columns()) csv += "," + (r.report.has(k) ? fmt(r.report.value(k), 10) : std::string());
            csv += "\n";
        }
        blocks.emplace_back(title, std::move(block));
    }
    write_text(dir / "table1.md", table1_markdown(blocks));
    write_text(dir / "table1.csv", csv);
    write_text(dir / "table1.json", j.dump(2) + "\n");
    write_text(dir / "config.txt", o.cfg.canonical());
}

// ---------------------------------------------------------------- report

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(read_file(p));
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        cells.push_back(cur);
        rows.push_back(std::move(cells));
    }
    return rows;
}

/// Plot-ready CSV (x = T, one median-MMD² column per mode) from a results
/// directory, and a markdown summary. Missing inputs or grid cells become
/// "NA" gap markers rather than errors.
inline void run_report(const fs::path& dir, const Config& cfg) {
    std::vector<std::string> inputs, gaps;
    std::map<std::pair<std::string, std::size_t>, std::vector<double>> mmd;
    const auto fig2 = dir / "fig2_points.csv";
    if (fs::exists(fig2)) {
        inputs.push_back("fig2_points.csv");
        const auto rows = read_csv(fig2);
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& r = rows[i];
            if (r.size() < 6 || r[5].empty()) continue;
            mmd[{r[0], static_cast<std::size_t>(std::stoull(r[1]))}].push_back(std::stod(r[5]));
        }
    } else {
        gaps.push_back("fig2_points.csv missing");
    }
    const auto modes = cfg.words("sweep.fig2_modes");
    const auto Ts = cfg.integers("sweep.T");
    std::string csv = "T";
    for (const auto& m : modes) csv += "," + m;
    csv += "\n";
    std::string md_table = "| T |";
    for (const auto& m : modes) md_table += " " + m + " |";
    md_table += "\n|---:|";
    for (std::size_t i = 0; i < modes.size(); ++i) md_table += "---:|";
    md_table += "\n";
    for (auto T : Ts) {
        csv += std::to_string(T);
        md_table += "| " + std::to_string(T) + " |";
        for (const auto& m : modes) {
            auto it = mmd.find({m, T});
            if (it == mmd.end()) {
                csv += ",NA";
                md_table += " NA |";
                gaps.push_back(m + " at T=" + std::to_string(T));
            } else {
                csv += "," + fmt(metrics::median(it->second), 10);
                md_table += " " + fmt(metrics::median(it->second), 4) + " |";
            }
        }
        csv += "\n";
        md_table += "\n";
    }
    write_text(dir / "fig2.csv", csv);

    for (const char* f : {"sweep.csv", "sweep_ranked.csv", "best.json", "table1.md"})
        if (fs::exists(dir / f)) inputs.push_back(f);
        else gaps.push_back(std::string(f) + " missing");
    std::string md = "# Results summary\n\n## Inputs\n\n| file | content hash |\n|---|---|\n";
    for (const auto& f : inputs) md += "| " + f + " | " + file_blob_hash(dir / f) + " |\n";
    md += "\n## Median MMD² by diffusion steps (unit guidance)\n\n" + md_table;
    if (fs::exists(dir / "sweep_ranked.csv")) {
        md += "\n## Best grid configurations\n\n| rank | mode | T | cfg context | cfg style | median MMD² | seeds |\n|---:|---|---:|---:|---:|---:|---:|\n";
        const auto rows = read_csv(dir / "sweep_ranked.csv");
        for (std::size_t i = 1; i < rows.size() && i <= 10; ++i) {
            md += "|";
            for (const auto& c : rows[i]) md += " " + c + " |";
            md += "\n";
        }
    }
    if (fs::exists(dir / "table1.md")) md += "\n## Objective metrics\n\n" + read_file(dir / "table1.md");
    if (!gaps.empty()) {
        md += "\n## Gaps\n\n";
        for (const auto& g : gaps) md += "- " + g + "\n";
    }
    md += "\n## Configuration\n\n```\n" + (fs::exists(dir / "config.txt") ? read_file(dir / "config.txt") : cfg.canonical()) + "```\n";
    write_text(dir / "report.md", md);
}

}  // namespace darf::harness

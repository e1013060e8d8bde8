// Command-line front end: corpus generation, training, sampling and the
// evaluation experiments. Exit codes: 0 success, 2 configuration error,
// 3 numerical failure, 4 missing artifact.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "darf/harness/experiments.hpp"

using namespace darf;
using namespace darf::harness;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3, kMissing = 4 };

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "runs/default";
    std::size_t threads = 1;
    bool force = false;
    bool quiet = false;
    std::vector<std::string> sets;
};

RunOptions options(const Globals& g, const std::string& seed_key) {
    RunOptions o;
    if (!g.config.empty()) o.cfg = Config::load(g.config);
    for (const auto& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        o.cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), "--set");
    }
    if (g.seed && !seed_key.empty()) o.cfg.set(seed_key, std::to_string(*g.seed), "--seed");
    o.out = g.out;
    o.threads = std::max<std::size_t>(1, g.threads);
    o.force = g.force;
    o.log = g.quiet ? nullptr : &std::cerr;
    return o;
}

std::string sample_hash(const Config& c) { return stage_hash("sample", ldm_hash(c), c, {"sample.", "eval."}); }

int run_sample(const RunOptions& o, const std::string& ckpt, const std::string& out_path) {
    const Config& c = o.cfg;
    const auto embedder = load_embedder(o, embedder_file(o));
    const auto prompts = load_prompts(o, embedder);
    auto model = load_ldm(o, ckpt.empty() ? ldm_file(o) : fs::path(ckpt));
    diffusion::ModelDenoiser den(model);
    const std::size_t n = c.integer("sample.count");
    const GridPoint g{parse_mode(c.str("sample.mode")), c.integer("sample.T"), c.number("sample.cfg_context"),
                      c.number("sample.cfg_style"), c.integer("sample.seed")};
    auto sc = sampler_config(c, g.T, g.seed);
    sc.threads = o.threads;
    const auto cond = conditioning(prompts, n, g);
    const std::size_t F = prompts.contexts.dim(1);
    const std::string mask_mode = c.str("sample.mask_mode");

    TensorFile f;
    if (mask_mode == "none") {
        if (sc.stereo_width > 0) {
            auto [l, r] = diffusion::pseudo_stereo_sample(cond, sc, den, nn::Shape{n, F, diffusion::kLatent});
            f.put("samples", std::move(l));
            f.put("right", std::move(r));
        } else {
            f.put("samples", diffusion::sample(cond, sc, den, nn::Shape{n, F, diffusion::kLatent}));
        }
    } else {
        if (sc.stereo_width > 0) throw ConfigError("pseudo-stereo is not combined with masked sampling");
        diffusion::MaskSpec spec;
        spec.reference = head_rows(prompts.real, n);
        if (mask_mode == "inpaint" || mask_mode == "outpaint") {
            spec.mode = mask_mode == "inpaint" ? diffusion::MaskMode::inpaint : diffusion::MaskMode::outpaint;
            spec.mask = parse_frame_ranges(c.str("sample.mask"), F);
            if (spec.mode == diffusion::MaskMode::outpaint) {
                // Generated frames must form one block touching an end of the window.
                const bool head = spec.mask.front(), tail = spec.mask.back();
                std::size_t changes = 0;
                for (std::size_t i = 1; i < F; ++i) changes += spec.mask[i] != spec.mask[i - 1];
                if (!(changes == 1 && head != tail))
                    throw ConfigError("outpaint mask must be one block of frames at the start or end of the window");
            }
        } else if (mask_mode == "variation") {
            spec.mode = diffusion::MaskMode::variation;
            spec.renoise = c.number("sample.renoise");
        } else if (mask_mode == "loop") {
            spec.mode = diffusion::MaskMode::loop;
            spec.loop_frames = c.integer("sample.loop_frames");
        } else {
            throw ConfigError("sample.mask_mode must be none, inpaint, outpaint, variation or loop");
        }
        f.put("samples", diffusion::masked_sample(cond, sc, spec, den));
    }
    f.put("contexts", head_rows(prompts.contexts, n));
    f.put("descriptions", head_rows(prompts.descriptions, n));
    f.put_text("mode", mode_name(g.mode));
    f.put_text("reference", evalset_hash(c));
    f.put_text("hash", sample_hash(c));
    f.put_text("config", c.canonical());
    const fs::path path = out_path.empty() ? o.out / "samples" / (mode_name(g.mode) + ".tensors") : fs::path(out_path);
    f.save(path);
    o.note("sample: wrote " + std::to_string(n) + " windows to " + path.string());
    return kOk;
}

int run_eval(const RunOptions& o, const std::string& real_path, const std::string& gen_path,
             const std::string& contexts_path, const std::string& report_path) {
    const auto real = TensorFile::load(real_path);
    const auto gen = TensorFile::load(gen_path);
    if (real.text_or("mode", "") != "reference")
        throw ConfigError(real_path + " is not a reference set (expected the datagen output " +
                          reference_file(o).filename().string() + ")");
    const std::string ref_hash = real.text_or("hash", "none");
    check_provenance(gen_path, gen.text_or("reference", "none"), ref_hash, o.force);
    const auto embedder = load_embedder(o, embedder_file(o));
    const metrics::EvalReference ref(embed_set(embedder, real.get("samples", real_path)),
                                     embed_set(embedder, real.get("contexts", real_path)), o.cfg.integer("eval.k"));
    const std::string mode = gen.text_or("mode", "unknown");
    const nn::Tensor<float>* ctx = nullptr;
    std::optional<TensorFile> ctx_file;
    if (!contexts_path.empty()) {
        ctx_file = TensorFile::load(contexts_path);
        ctx = &ctx_file->get(ctx_file->has("contexts") ? "contexts" : "samples", contexts_path);
    } else if ((mode == "real" || (mode != "unknown" && uses_context(parse_mode(mode)))) && gen.has("contexts")) {
        ctx = &gen.get("contexts");
    }
    const nn::Tensor<float>* desc = nullptr;
    if ((mode == "real" || (mode != "unknown" && uses_description(parse_mode(mode)))) && gen.has("descriptions"))
        desc = &gen.get("descriptions");
    const auto rep = score(ref, embedder, gen.get("samples", gen_path), ctx, desc, eval_options(o.cfg));
    const fs::path path = report_path.empty() ? o.out / "eval.json" : fs::path(report_path);
    write_report(path, rep, "generated=" + gen.text_or("hash", "none") + "\nreference=" + ref_hash + "\n" + o.cfg.canonical());
    std::cout << report_json(rep).dump(2) << std::endl;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"darf: latent-diffusion accompaniment engine"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "key = value configuration file");
    app.add_option("--seed", g.seed, "seed of the command being run");
    app.add_option("--out", g.out, "run directory");
    app.add_option("--threads", g.threads, "worker threads");
    app.add_option("--set", g.sets, "configuration override key=value (repeatable)");
    app.add_flag("--force", g.force, "accept artifacts built under a different configuration");
    app.add_flag("--quiet", g.quiet, "no progress output");

    std::string spec_file, codec_out, codec_in, corpus_in, ldm_out, ckpt, sample_out, real, gen, contexts, report, results;
    std::optional<std::uint64_t> steps, T, count;
    std::optional<double> cfg_context, cfg_style, width;
    std::optional<std::string> mode;

    auto* tc = app.add_subcommand("train-codec", "consistency-train the codec");
    tc->add_option("--spec", spec_file, "dataset spec (a config file; only data.* keys are used)");
    tc->add_option("--steps", steps, "training steps");
    tc->add_option("--out", codec_out, "checkpoint path");

    auto* dg = app.add_subcommand("datagen", "encode the training corpus and the held-out set");
    dg->add_option("--codec", codec_in, "codec checkpoint");

    auto* tl = app.add_subcommand("train-ldm", "train the latent diffusion model");
    tl->add_option("--corpus", corpus_in, "corpus file");
    tl->add_option("--steps", steps, "training steps");
    tl->add_option("--out", ldm_out, "checkpoint path");

    auto* sa = app.add_subcommand("sample", "generate accompaniment latents for the prompt windows");
    sa->add_option("--ckpt", ckpt, "diffusion checkpoint");
    sa->add_option("--mode", mode, "full | context-only | style-only | description-context | description-only | uncond");
    sa->add_option("--T", T, "diffusion steps");
    sa->add_option("--cfg-context", cfg_context, "context guidance strength");
    sa->add_option("--cfg-style", cfg_style, "style guidance strength");
    sa->add_option("--stereo-width", width, "pseudo-stereo width");
    sa->add_option("--seed", g.seed, "sampling seed");
    sa->add_option("--count", count, "number of windows");
    sa->add_option("--out", sample_out, "tensor file");

    auto* ev = app.add_subcommand("eval", "score generated latents against the reference set");
    ev->add_option("--real", real, "reference tensor file")->required();
    ev->add_option("--gen", gen, "generated tensor file")->required();
    ev->add_option("--contexts", contexts, "tensor file with contexts paired to --gen");
    ev->add_option("--report", report, "report path (.json; a .csv is written alongside)");

    auto* sw = app.add_subcommand("sweep", "grid over steps, guidance and conditional modes");
    sw->add_option("--results", results, "results directory");
    auto* t1 = app.add_subcommand("table1", "objective metrics for the two reference configurations");
    t1->add_option("--results", results, "results directory");
    auto* rp = app.add_subcommand("report", "plot-ready CSV and markdown summary of a results directory");
    rp->add_option("--results", results, "results directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        auto results_dir = [&](const RunOptions& o) { return results.empty() ? o.out / "results" : fs::path(results); };
        if (*tc) {
            RunOptions o = options(g, "codec.seed");
            if (!spec_file.empty()) {
                const Config spec = Config::load(spec_file);
                for (const auto& k : config_schema())
                    if (std::string(k.key).rfind("data.", 0) == 0) o.cfg.set(k.key, spec.str(k.key));
            }
            if (steps) o.cfg.set("codec.steps", std::to_string(*steps));
            auto m = train_codec(o);
            save_codec(o, m, codec_out.empty() ? codec_file(o) : fs::path(codec_out));
            o.note("train-codec: boundary deviation " + fmt(codec::boundary_check(m, 8)));
        } else if (*dg) {
            RunOptions o = options(g, "data.seed");
            run_datagen(o, codec_in.empty() ? codec_file(o) : fs::path(codec_in));
        } else if (*tl) {
            RunOptions o = options(g, "ldm.seed");
            if (steps) o.cfg.set("ldm.steps", std::to_string(*steps));
            const auto corpus = load_corpus(o, corpus_in.empty() ? corpus_file(o) : fs::path(corpus_in), corpus_hash(o.cfg));
            std::vector<double> curve;
            auto m = train_ldm(o, corpus, &curve);
            save_ldm(o, m, ldm_out.empty() ? ldm_file(o) : fs::path(ldm_out), curve);
        } else if (*sa) {
            RunOptions o = options(g, "sample.seed");
            if (mode) o.cfg.set("sample.mode", *mode);
            if (T) o.cfg.set("sample.T", std::to_string(*T));
            if (cfg_context) o.cfg.set("sample.cfg_context", fmt(*cfg_context, 17));
            if (cfg_style) o.cfg.set("sample.cfg_style", fmt(*cfg_style, 17));
            if (width) o.cfg.set("sample.stereo_width", fmt(*width, 17));
            if (count) o.cfg.set("sample.count", std::to_string(*count));
            return run_sample(o, ckpt, sample_out);
        } else if (*ev) {
            RunOptions o = options(g, "");
            return run_eval(o, real, gen, contexts, report);
        } else if (*sw) {
            RunOptions o = options(g, "");
            if (g.seed) o.cfg.set("sweep.seeds", std::to_string(*g.seed), "--seed");
            run_sweep(o, results_dir(o));
        } else if (*t1) {
            RunOptions o = options(g, "sample.seed");
            run_table1(o, results_dir(o));
        } else if (*rp) {
            RunOptions o = options(g, "");
            run_report(results_dir(o), o.cfg);
        }
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kMissing;
    } catch (const IoError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kMissing;
    } catch (const DataError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}

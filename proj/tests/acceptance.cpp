// Acceptance run: one PASS/FAIL line per criterion. Exit status 0 only when
// every selected criterion passes.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "darf/harness/experiments.hpp"
#include "support/codec_oracles.hpp"
#include "support/diffusion_oracles.hpp"
#include "support/metrics_oracles.hpp"
#include "support/nnkit_oracles.hpp"

using namespace darf;
namespace fs = std::filesystem;
namespace dd = darf::diffusion;
namespace od = darf::oracle::diff;
namespace om = darf::oracle::met;

namespace {

/// Accumulates sub-checks of one criterion; the first failures are kept as
/// the detail line.
struct Verdict {
    bool ok = true;
    std::vector<std::string> notes;
    std::vector<std::string> failures;

    void check(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            failures.push_back(what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string num(double v, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

struct Settings {
    fs::path work = "acceptance_run";
    std::size_t threads = 1;
    std::string e2e_config;
    std::string cli;
    std::string smoke_config;
};

// ---------------------------------------------------------------- 1

Verdict gradients(const Settings&) {
    Verdict v;
    Rng rng(2024);
    double worst = 0;
    int cases = 0;
    for (int rep = 0; rep < 9; ++rep)
        for (int op = 0; op < oracle::nnk::kOpCases; ++op, ++cases) {
            const double e = oracle::nnk::check_op_case<double>(op, rng, 1e-6);
            worst = std::max(worst, e);
            v.check(e < 1e-6, "op " + std::to_string(op) + " rep " + std::to_string(rep) + " rel error " + num(e));
        }
    v.check(cases >= 100, "only " + std::to_string(cases) + " configurations");
    v.note(std::to_string(cases) + " configurations, worst rel error " + num(worst, 3));
    return v;
}

// ---------------------------------------------------------------- 2

/// max over dimensions of |mean − μ|/s + |var/s² − 1|
double moment_error(const nn::Tensor<float>& x, const std::vector<double>& mu, double s) {
    const auto m = od::moments(x);
    double err = 0;
    for (std::size_t c = 0; c < mu.size(); ++c)
        err = std::max(err, std::abs(m.mean[c] - mu[c]) / s + std::abs(m.var[c] / (s * s) - 1.0));
    return err;
}

Verdict analytic_sampling(const Settings&) {
    Verdict v;
    const std::size_t D = 8, N = 10000;
    std::vector<double> mu(D);
    for (std::size_t c = 0; c < D; ++c) mu[c] = 0.5 * double(c) - 1.5;
    const double s = 0.7;
    od::GaussianOracle oracle(mu, s);
    auto run = [&](std::size_t T, double eta) {
        dd::SamplerConfig cfg;
        cfg.schedule = dd::build_schedule(0.002, 80, T);
        cfg.stochasticity = eta;
        cfg.seed = 11;
        cfg.chunk = 1000;
        return dd::sample({}, cfg, oracle, nn::Shape{N, 1, D});
    };
    for (double eta : {0.0, 1.0}) {
        const auto m = od::moments(run(50, eta));
        double worst_mean = 0, worst_var = 0;
        for (std::size_t c = 0; c < D; ++c) {
            worst_mean = std::max(worst_mean, std::abs(m.mean[c] - mu[c]) / s);
            worst_var = std::max(worst_var, std::abs(m.var[c] / (s * s) - 1.0));
        }
        v.check(worst_mean < 0.05, "eta " + num(eta) + ": mean off by " + num(worst_mean) + "·s");
        v.check(worst_var < 0.10, "eta " + num(eta) + ": variance off by " + num(100 * worst_var) + "%");
        v.note("eta " + num(eta) + " T=50: |mean err| " + num(worst_mean, 3) + "·s, |var err| " + num(100 * worst_var, 3) + "%");

        std::string seq;
        double prev = 1e300;
        for (std::size_t T : {5, 10, 20, 30, 50}) {
            const double e = moment_error(run(T, eta), mu, s);
            seq += (seq.empty() ? "" : " > ") + num(e, 3);
            v.check(e < prev, "eta " + num(eta) + ": error did not decrease at T=" + std::to_string(T));
            prev = e;
        }
        v.note("eta " + num(eta) + " error T=5..50: " + seq);
    }
    return v;
}

// ---------------------------------------------------------------- 3

Verdict guidance(const Settings&) {
    Verdict v;
    dd::DenoiserModel<float> m(od::tiny());
    dd::ModelDenoiser md(m);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x = od::randn(nn::Shape{3, 10, 64}, 10 * seed + 1);
        dd::ConditioningBundle c;
        c.context = od::randn(nn::Shape{3, 10, 64}, 10 * seed + 2, 0.1);
        c.style = od::unit_rows(3, 10 * seed + 3);
        const double sigma = 0.1 + 0.7 * double(seed);
        c.cfg_context = c.cfg_style = 1.0;
        v.check(dd::guided_denoise(x, sigma, c, md) == md.denoise(x, sigma, &*c.context, &*c.style),
                "(1,1) differs from the conditional evaluation, seed " + std::to_string(seed));
        c.cfg_context = c.cfg_style = 0.0;
        v.check(dd::guided_denoise(x, sigma, c, md) == md.denoise(x, sigma, nullptr, nullptr),
                "(0,0) differs from the unconditional evaluation, seed " + std::to_string(seed));
    }
    // Sequential form: D∅ + wc·(Dc − D∅) + ws·(Dcs − Dc).
    od::ScalarStub stub;
    stub.none = 0.25;
    stub.ctx = 1.5;
    stub.full = -0.75;
    dd::ConditioningBundle c;
    c.context = nn::Tensor<float>(nn::Shape{2, 3, 64});
    c.style = nn::Tensor<float>(nn::Shape{2, 64});
    double worst = 0;
    for (const auto& [wc, ws] : std::vector<std::pair<double, double>>{{1.25, 1.25}, {2.0, 0.5}, {0.0, 3.0}, {1.5, 0.0}}) {
        c.cfg_context = wc;
        c.cfg_style = ws;
        const double want = 0.25 + wc * (1.5 - 0.25) + ws * (-0.75 - 1.5);
        for (float got : dd::guided_denoise(nn::Tensor<float>(nn::Shape{2, 3, 64}), 1.0, c, stub).data())
            worst = std::max(worst, std::abs(double(got) - want));
    }
    v.check(worst <= 1e-12, "scalar stub off by " + num(worst));
    v.note("bitwise identities on 5 inputs, scalar stub max deviation " + num(worst));
    return v;
}

// ---------------------------------------------------------------- 4

Verdict stereo(const Settings&) {
    Verdict v;
    dd::DenoiserModel<float> m(od::tiny());
    dd::ModelDenoiser md(m);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        dd::SamplerConfig cfg;
        cfg.schedule = dd::build_schedule(0.002, 80, 5);
        cfg.seed = seed;
        cfg.stereo_width = 0.0;
        const auto [l, r] = dd::pseudo_stereo_sample({}, cfg, md, nn::Shape{2, 10, 64});
        v.check(l == r, "width 0 channels differ, seed " + std::to_string(seed));
    }
    od::GaussianOracle oracle(std::vector<double>(64, 0.0), 1.0);
    const std::vector<double> widths{0.0, 0.2, 0.4, 0.8, 1.0};
    std::vector<double> xs, ys, means;
    for (double w : widths) {
        double sum = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            dd::SamplerConfig cfg;
            cfg.schedule = dd::build_schedule(0.002, 80, 30);
            cfg.stereo_width = w;
            cfg.seed = 100 + seed;
            const auto [l, r] = dd::pseudo_stereo_sample({}, cfg, oracle, nn::Shape{64, 1, 64});
            double corr = 0;
            for (std::size_t b = 0; b < 64; ++b) {
                std::vector<double> a(l.raw() + b * 64, l.raw() + (b + 1) * 64), c(r.raw() + b * 64, r.raw() + (b + 1) * 64);
                corr += metrics::pearson(a, c) / 64.0;
            }
            xs.push_back(w);
            ys.push_back(corr);
            sum += corr / 5.0;
        }
        means.push_back(sum);
    }
    std::string seq;
    for (std::size_t i = 0; i < means.size(); ++i) {
        seq += (i ? " ≥ " : "") + num(means[i], 3);
        if (i) v.check(means[i] <= means[i - 1], "mean correlation rises at width " + num(widths[i]));
    }
    const auto t = metrics::spearman(xs, ys);
    v.check(t.p_decreasing < 0.05, "Spearman p = " + num(t.p_decreasing));
    v.note("20 seeds bitwise at width 0; correlation " + seq + "; Spearman rho " + num(t.rho, 3) + ", p " + num(t.p_decreasing, 3));
    return v;
}

// ---------------------------------------------------------------- 5

Verdict consistency(const Settings& s) {
    Verdict v;
    codec::CodecModel<float> fresh;
    const double b0 = codec::boundary_check(fresh, 8);
    v.check(b0 < 1e-6, "boundary deviation at initialization " + num(b0));

    harness::RunOptions o;
    o.threads = s.threads;
    const auto spec = harness::train_spec(o.cfg);
    // Fixed monitoring batch: crops drawn from the training distribution with
    // a stream the training loop never uses.
    const std::size_t B = o.cfg.integer("codec.batch"), crop = o.cfg.integer("codec.crop_frames") * codec::kHop;
    nn::Tensor<float> fixed(nn::Shape{B, crop});
    Rng rng(0x5eed);
    for (std::size_t b = 0; b < B; ++b) {
        const auto ts = synth::generate_trackset(spec, rng.below(o.cfg.integer("codec.tracksets")));
        const auto segs = synth::window_segments(ts, spec);
        const auto pair = synth::make_pair(ts, segs[rng.below(segs.size())], rng);
        const auto& src = rng.bernoulli(0.5) ? pair.context.samples : pair.accompaniment.samples;
        const std::size_t off = rng.below(spec.window_samples() - crop + 1);
        std::copy_n(src.begin() + static_cast<long>(off), crop, fixed.raw() + b * crop);
    }
    std::vector<codec::ConsistencyDraw<float>> draws;
    double l0 = 0, best = 1e300, last = 0;
    std::size_t halved_at = 0;
    auto fixed_loss = [&](codec::ConsistencyTrainer<float>& tr) {
        double l = 0;
        for (const auto& d : draws) l += tr.loss(fixed, d);
        return l / double(draws.size());
    };
    const std::size_t steps = o.cfg.integer("codec.steps");
    v.check(steps <= 2000, "codec.steps exceeds the 2k budget");
    const auto trained = harness::train_codec(o, [&](std::size_t step, codec::ConsistencyTrainer<float>& tr) {
        if (step == 0) {
            for (int i = 0; i < 8; ++i) draws.push_back(tr.draw(B, crop));
            l0 = fixed_loss(tr);
            return;
        }
        if (step % 250 != 0 && step != steps) return;
        last = fixed_loss(tr);
        best = std::min(best, last);
        if (!halved_at && last < 0.5 * l0) halved_at = step;
    });
    auto teacher = trained;
    const double b1 = codec::boundary_check(teacher, 8);
    v.check(b1 < 1e-6, "boundary deviation after training " + num(b1));
    v.check(halved_at != 0, "fixed-batch loss only fell to " + num(last / l0) + " of its initial value");
    v.note("boundary " + num(b0, 2) + " → " + num(b1, 2) + "; fixed-batch loss ratio " + num(last / l0, 3) + " after " +
           std::to_string(steps) + " steps" + (halved_at ? ", below 0.5 by step " + std::to_string(halved_at) : ""));
    return v;
}

// ---------------------------------------------------------------- 6

Verdict metric_oracles(const Settings&) {
    Verdict v;
    Rng rng(1);
    double worst_mmd = 0;
    for (std::size_t n = 3; n <= 32; ++n) {
        const auto a = om::random_set(n, 8, rng), b = om::random_set(n + 1, 8, rng, 0.3);
        const double ref = om::mmd2_bruteforce(a, b);
        worst_mmd = std::max(worst_mmd, std::abs(metrics::mmd2(a, b) - ref) / std::max(std::abs(ref), 1e-300));
    }
    v.check(worst_mmd < 1e-12, "MMD² rel deviation " + num(worst_mmd));

    Eigen::VectorXd mu(3);
    mu << 0.5, -1.0, 2.0;
    const double shifted = metrics::frechet_from_stats(om::stats(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)),
                                                       om::stats(mu, Eigen::MatrixXd::Identity(3, 3)));
    v.check(std::abs(shifted - mu.squaredNorm()) < 1e-6, "shifted Fréchet " + num(shifted, 12));
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = 4;
    a(1, 1) = 9;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 2);
    b(0, 0) = 1;
    b(1, 1) = 1;
    Eigen::VectorXd m2(2);
    m2 << 1, 0;
    // Σ(√a − √b)² + ‖μ‖² = 1 + 4 + 1
    const double diag = metrics::frechet_from_stats(om::stats(Eigen::VectorXd::Zero(2), a), om::stats(m2, b));
    v.check(std::abs(diag - 6.0) < 1e-6, "diagonal Fréchet " + num(diag, 12));
    double self = 0;
    for (std::size_t n : {10, 100, 300}) {
        const auto x = om::random_set(n, 16, rng);
        self = std::max(self, std::abs(metrics::frechet(x, x)));
    }
    v.check(self < 1e-8, "frechet(X, X) = " + num(self));

    std::size_t dc_cases = 0, dc_bad = 0;
    for (std::size_t n = 7; n <= 32; ++n)
        for (std::size_t k : {1, 3, 5}) {
            const auto r = om::random_set(n, 3, rng), g = om::random_set(n / 2 + 1 + (n % 5), 3, rng, 0.3);
            const auto got = metrics::density_coverage(r, g, k), want = om::dc_bruteforce(r, g, k);
            ++dc_cases;
            dc_bad += !(got.density == want.density && got.coverage == want.coverage);
        }
    v.check(dc_bad == 0, std::to_string(dc_bad) + " density/coverage mismatches");
    v.note("MMD² rel dev " + num(worst_mmd, 2) + ", Fréchet closed forms exact to " +
           num(std::max(std::abs(shifted - mu.squaredNorm()), std::abs(diag - 6.0)), 2) + ", self " + num(self, 2) + ", " +
           std::to_string(dc_cases) + " density/coverage cases exact");
    return v;
}

// ---------------------------------------------------------------- 7

Verdict dropout(const Settings&) {
    Verdict v;
    dd::DenoiserModel<float> m(od::tiny());
    dd::TrainConfig tc;
    tc.warmup_steps = 10;
    dd::Trainer<float> tr(m, tc, 17);
    dd::TrainBatch batch{od::randn(nn::Shape{4, 2, 64}, 1, 0.1), od::randn(nn::Shape{4, 2, 64}, 2, 0.1), od::unit_rows(4, 3)};
    for (int i = 0; i < 10000; ++i) tr.step(batch);
    const auto& c = tr.dropout_counts();
    const double fc = double(c.context_null) / c.items, fs_ = double(c.style_null) / c.items,
                 fb = double(c.both_null) / c.items;
    v.check(std::abs(fc - 0.5) <= 0.02, "context null rate " + num(fc));
    v.check(std::abs(fs_ - 0.5) <= 0.02, "style null rate " + num(fs_));
    v.check(std::abs(fb - 0.25) <= 0.02, "both null rate " + num(fb));
    v.note(std::to_string(c.items) + " items: context " + num(fc, 4) + ", style " + num(fs_, 4) + ", both " + num(fb, 4));
    return v;
}

// ---------------------------------------------------------------- 8

Verdict masks(const Settings&) {
    Verdict v;
    dd::DenoiserModel<float> m(od::tiny());
    dd::ModelDenoiser md(m);
    Rng rng(31);
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        dd::SamplerConfig cfg;
        cfg.schedule = dd::build_schedule(0.002, 80, 6);
        cfg.seed = 2 + trial;
        dd::ConditioningBundle c;
        c.context = od::randn(nn::Shape{3, 10, 64}, 50 + trial, 0.1);
        c.style = od::unit_rows(3, 60 + trial);
        dd::MaskSpec spec;
        spec.reference = od::randn(nn::Shape{3, 10, 64}, 7 + trial, 0.2);
        spec.mask.resize(10);
        for (std::size_t f = 0; f < 10; ++f) spec.mask[f] = rng.bernoulli(0.5);
        const auto out = dd::masked_sample(c, cfg, spec, md);
        bool same = true;
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t f = 0; f < 10; ++f)
                if (!spec.mask[f])
                    for (std::size_t k = 0; k < 64; ++k) same = same && out.at(b, f, k) == spec.reference.at(b, f, k);
        v.check(same, "unmasked frames changed, trial " + std::to_string(trial));
        spec.mask.assign(10, true);
        v.check(dd::masked_sample(c, cfg, spec, md) == dd::sample(c, cfg, md, 3, 10),
                "all-true mask differs from plain sampling, trial " + std::to_string(trial));
    }
    v.note("5 random masks preserved bitwise; all-true mask equals plain sampling");
    return v;
}

// ---------------------------------------------------------------- 9

/// True when `fn` (an artifact load with provenance checks) succeeds.
bool fresh(const std::function<void()>& fn) {
    try {
        fn();
        return true;
    } catch (const Error&) {
        return false;
    }
}

void ensure_pipeline(const harness::RunOptions& o) {
    using namespace harness;
    if (!fresh([&] { load_codec(o, codec_file(o)); })) {
        o.note("e2e: training codec");
        auto m = train_codec(o);
        save_codec(o, m, codec_file(o));
    }
    const bool data_ok = fresh([&] {
        load_corpus(o, corpus_file(o), corpus_hash(o.cfg));
        const auto h = evalset_hash(o.cfg);
        for (const auto& [file, key] : std::vector<std::pair<fs::path, std::string>>{
                 {embedder_file(o), "hash"}, {reference_file(o), "hash"}, {real_file(o), "reference"}})
            if (TensorFile::load(file).text(key) != h) throw ConfigError("stale " + file.string());
    });
    if (!data_ok) {
        o.note("e2e: generating corpus and held-out set");
        run_datagen(o, codec_file(o));
    }
    if (!fresh([&] { load_ldm(o, ldm_file(o)); })) {
        o.note("e2e: training diffusion model");
        std::vector<double> curve;
        auto m = train_ldm(o, load_corpus(o, corpus_file(o), corpus_hash(o.cfg)), &curve);
        save_ldm(o, m, ldm_file(o), curve);
    }
}

Verdict trends(const Settings& s) {
    using namespace harness;
    Verdict v;
    RunOptions o;
    if (!s.e2e_config.empty()) o.cfg = Config::load(s.e2e_config);
    o.out = s.work / "e2e";
    o.threads = s.threads;
    o.log = &std::cerr;
    ensure_pipeline(o);

    const Bench bench(o);
    const auto Ts = o.cfg.integers("sweep.T");
    const auto seeds = o.cfg.integers("sweep.seeds");
    const std::size_t Tmax = 30;
    std::vector<GridPoint> points;
    for (auto T : Ts)
        for (auto sd : seeds) points.push_back({Mode::full, T, 1.0, 1.0, sd});
    for (auto sd : seeds) {
        points.push_back({Mode::full, Tmax, 1.25, 1.25, sd});
        points.push_back({Mode::context_only, Tmax, 1.25, 1.25, sd});
        points.push_back({Mode::uncond, Tmax, 1.25, 1.25, sd});
    }
    const auto rows = run_points(bench, points, o.threads);
    write_text(o.out / "acceptance_points.csv", rows_csv(rows));

    auto median_of = [&](Mode m, std::size_t T, double w, const char* metric) {
        std::vector<double> xs;
        for (const auto& r : rows)
            if (r.point.mode == m && r.point.T == T && r.point.cfg_context == w) xs.push_back(r.report.value(metric));
        return metrics::median(xs);
    };

    // (a) steps trend, full conditioning, unit guidance
    std::string seq;
    double prev = 1e300;
    for (auto T : Ts) {
        const double x = median_of(Mode::full, T, 1.0, "mmd2");
        seq += (seq.empty() ? "" : ", ") + std::string("T=") + std::to_string(T) + " " + num(x, 4);
        v.check(x <= prev, "(a) median MMD² rises at T=" + std::to_string(T));
        prev = x;
    }
    v.note("(a) full-mode median MMD²: " + seq);

    // (b) mode ordering at the first reference configuration
    const double full = median_of(Mode::full, Tmax, 1.25, "mmd2"), ctx = median_of(Mode::context_only, Tmax, 1.25, "mmd2"),
                 unc = median_of(Mode::uncond, Tmax, 1.25, "mmd2");
    v.check(full < ctx, "(b) MMD² full " + num(full) + " not below context-only " + num(ctx));
    v.check(ctx < unc, "(b) MMD² context-only " + num(ctx) + " not below unconditional " + num(unc));
    const std::size_t n = candidate_count(o.cfg);
    const auto opt = eval_options(o.cfg);
    const auto prompt_ctx = head_rows(bench.prompts.contexts, n);
    const double apa_real =
        score(*bench.reference, bench.embedder, head_rows(bench.prompts.real, n), &prompt_ctx, nullptr, opt).value("apa");
    auto shuffled = prompt_ctx;
    const std::size_t per = prompt_ctx.size() / n;
    const auto perm = metrics::derangement(n, 0xadd);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(prompt_ctx.raw() + perm[i] * per, per, shuffled.raw() + i * per);
    const double apa_shuf =
        score(*bench.reference, bench.embedder, head_rows(bench.prompts.real, n), &shuffled, nullptr, opt).value("apa");
    const double apa_full = median_of(Mode::full, Tmax, 1.25, "apa");
    v.check(apa_real > apa_full, "(b) APA real " + num(apa_real) + " not above full " + num(apa_full));
    v.check(apa_full > apa_shuf, "(b) APA full " + num(apa_full) + " not above shuffled " + num(apa_shuf));
    v.note("(b) T=30 CFG=1.25 MMD² full " + num(full) + ", context-only " + num(ctx) + ", uncond " + num(unc) +
           "; APA real " + num(apa_real, 3) + ", full " + num(apa_full, 3) + ", shuffled " + num(apa_shuf, 3));

    // (c) guidance helps at T=30
    const double g1 = median_of(Mode::full, Tmax, 1.0, "mmd2"), g125 = median_of(Mode::full, Tmax, 1.25, "mmd2");
    v.check(g125 <= g1, "(c) MMD² at CFG 1.25 " + num(g125) + " above CFG 1 " + num(g1));
    v.note("(c) T=30 median MMD² CFG 1 " + num(g1) + ", CFG 1.25 " + num(g125));
    return v;
}

// ---------------------------------------------------------------- 10

int run_cli(const Settings& s, const fs::path& dir, const std::string& args) {
    const std::string cmd = "\"" + s.cli + "\" --config \"" + s.smoke_config + "\" --out \"" + dir.string() + "\" --quiet " + args;
    return std::system(cmd.c_str());
}

Verdict reproducibility(const Settings& s) {
    Verdict v;
    if (s.cli.empty() || s.smoke_config.empty()) {
        v.check(false, "needs --cli and --smoke-config");
        return v;
    }
    const std::vector<std::string> commands{"train-codec", "datagen", "train-ldm", "sample", "sample --mode uncond --T 5",
                                            "sample --mode description-context --stereo-width 0.4 --cfg-context 1.25",
                                            "eval samples/full.tensors", "eval real.tensors", "sweep", "table1", "report"};
    std::vector<std::map<std::string, std::string>> trees;
    for (const char* run : {"a", "b"}) {
        const fs::path dir = s.work / "repro" / run;
        fs::remove_all(dir);
        for (auto cmd : commands) {
            if (cmd.rfind("eval", 0) == 0)
                cmd = "eval --real \"" + (dir / "reference.tensors").string() + "\" --gen \"" + (dir / cmd.substr(5)).string() +
                      "\" --report \"" + (dir / "eval" / fs::path(cmd.substr(5)).stem()).string() + ".json\" > /dev/null";
            const int rc = run_cli(s, dir, cmd);
            v.check(rc == 0, std::string("run ") + run + ": '" + cmd + "' exited with " + std::to_string(rc));
        }
        std::map<std::string, std::string> t;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file()) t[fs::relative(e.path(), dir).string()] = harness::read_file(e.path());
        trees.push_back(std::move(t));
    }
    std::size_t differing = 0;
    for (const auto& [name, bytes] : trees[0]) {
        const auto it = trees[1].find(name);
        const bool same = it != trees[1].end() && it->second == bytes;
        differing += !same;
        v.check(same, name + " differs between runs");
    }
    v.check(trees[0].size() == trees[1].size(), "runs produced different file sets");
    v.note(std::to_string(commands.size()) + " commands twice; " + std::to_string(trees[0].size()) + " files, " +
           std::to_string(differing) + " differing");
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    Settings s;
    std::string only;
    app.add_option("--work", s.work, "scratch and cache directory");
    app.add_option("--threads", s.threads, "worker threads for the end-to-end run");
    app.add_option("--config", s.e2e_config, "configuration of the end-to-end run (default: built-in desk scale)");
    app.add_option("--cli", s.cli, "path of the darf executable");
    app.add_option("--smoke-config", s.smoke_config, "configuration for the reproducibility run");
    app.add_option("--only", only, "comma-separated criterion numbers");
    CLI11_PARSE(app, argc, argv);

    struct Criterion {
        int id;
        const char* name;
        double budget_s;  // 0 = no runtime bound
        Verdict (*fn)(const Settings&);
    };
    const std::vector<Criterion> all{
        {1, "gradient correctness", 60, gradients},
        {2, "analytic-score sampling", 120, analytic_sampling},
        {3, "guidance identities", 0, guidance},
        {4, "pseudo-stereo", 0, stereo},
        {5, "consistency boundary and training", 0, consistency},
        {6, "metric oracles", 0, metric_oracles},
        {7, "conditioning dropout", 0, dropout},
        {8, "mask preservation", 0, masks},
        {9, "trend reproduction", 7200, trends},
        {10, "reproducibility", 0, reproducibility},
    };
    std::set<int> pick;
    for (const auto& t : harness::split(only, ',')) pick.insert(std::stoi(t));
    fs::create_directories(s.work);

    int failed = 0;
    for (const auto& c : all) {
        if (!pick.empty() && !pick.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.fn(s);
        } catch (const std::exception& e) {
            v.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0) v.check(secs < c.budget_s, "took " + num(secs, 3) + " s, budget " + num(c.budget_s) + " s");
        failed += !v.ok;
        std::string detail;
        for (const auto& n : v.notes) detail += (detail.empty() ? "" : "; ") + n;
        for (std::size_t i = 0; i < v.failures.size() && i < 4; ++i) detail += " | FAILED: " + v.failures[i];
        if (v.failures.size() > 4) detail += " | (+" + std::to_string(v.failures.size() - 4) + " more)";
        std::cout << (v.ok ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << c.id << "  " << c.name << " ["
                  << std::fixed << std::setprecision(1) << secs << " s]  " << std::defaultfloat << detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}

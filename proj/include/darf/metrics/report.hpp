#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "darf/metrics/distances.hpp"
#include "darf/metrics/stats.hpp"

namespace darf::metrics {

struct MetricValue {
    double value = 0;            // mean of batches
    std::vector<double> batches;
    double ci95 = 0;             // half-width
};

struct MetricReport {
    std::map<std::string, MetricValue> metrics;
    std::size_t batch_count = 0;
    std::size_t batch_size = 0;

    bool has(const std::string& k) const { return metrics.count(k) != 0; }
    double value(const std::string& k) const {
        auto it = metrics.find(k);
        if (it == metrics.end()) throw DataError("metric report has no '" + k + "' entry");
        return it->second.value;
    }

    void add(const std::string& name, std::vector<double> per_batch) {
        MetricValue v;
        v.value = mean(per_batch);
        v.ci95 = ci95_half_width(per_batch);
        v.batches = std::move(per_batch);
        metrics[name] = std::move(v);
    }
};

/// Reference side of an evaluation, with per-set statistics precomputed once.
class EvalReference {
public:
    EvalReference(EmbeddingSet accompaniments, EmbeddingSet contexts, std::size_t k = 5)
        : acc_(std::move(accompaniments)), ctx_(std::move(contexts)), k_(k), mmd_(acc_) {
        acc_stats_ = fit_gaussian(acc_);
        radii_ = knn_radii(acc_, k_);
        if (!ctx_.rows.empty()) pair_stats_ = fit_gaussian(concat_pairs(ctx_, acc_));
    }

    EvalReference(const EvalReference&) = delete;
    EvalReference& operator=(const EvalReference&) = delete;

    const EmbeddingSet& accompaniments() const { return acc_; }
    const EmbeddingSet& contexts() const { return ctx_; }
    std::size_t k() const { return k_; }
    double mmd2(const EmbeddingSet& gen) const { return mmd_(gen); }
    double frechet(const EmbeddingSet& gen) const { return frechet_from_stats(fit_gaussian(gen), acc_stats_); }
    DensityCoverage density_coverage(const EmbeddingSet& gen) const {
        return density_coverage_with_radii(acc_, radii_, gen, k_);
    }
    bool has_pairs() const { return pair_stats_.has_value(); }
    AdherenceParts adherence(const EmbeddingSet& contexts, const EmbeddingSet& candidates, std::uint64_t seed) const {
        if (!pair_stats_) throw DataError("adherence needs reference contexts");
        return adherence_parts(contexts, candidates, *pair_stats_, seed);
    }

private:
    EmbeddingSet acc_, ctx_;
    std::size_t k_;
    MmdReference mmd_;
    GaussianStats acc_stats_;
    std::vector<double> radii_;
    std::optional<GaussianStats> pair_stats_;
};

struct EvalOptions {
    std::size_t batches = 5;
    std::size_t batch_size = 200;
    std::uint64_t seed = 0;
};

/// Candidate side: embeddings plus optional paired contexts and descriptions.
struct EvalCandidates {
    EmbeddingSet audio;
    std::optional<EmbeddingSet> contexts;      // enables "apa"
    std::optional<EmbeddingSet> descriptions;  // enables "cs"
};

inline EmbeddingSet slice(const EmbeddingSet& s, std::size_t begin, std::size_t n) {
    EmbeddingSet out;
    out.provenance = s.provenance;
    out.rows.assign(s.rows.begin() + static_cast<long>(begin), s.rows.begin() + static_cast<long>(begin + n));
    return out;
}

/// Splits candidates into `batches` consecutive batches and averages each metric.
inline MetricReport evaluate(const EvalReference& ref, const EvalCandidates& cand, const EvalOptions& opt) {
    const std::size_t need = opt.batches * opt.batch_size;
    if (cand.audio.size() < need)
        throw DataError("evaluate: " + std::to_string(cand.audio.size()) + " candidates, need " +
                        std::to_string(opt.batches) + " batches of " + std::to_string(opt.batch_size));
    if (cand.contexts && cand.contexts->size() < need) throw DataError("evaluate: fewer contexts than candidates");
    if (cand.descriptions && cand.descriptions->size() < need)
        throw DataError("evaluate: fewer descriptions than candidates");
    std::vector<double> mmd, fd, dens, cov, apa, cs;
    for (std::size_t b = 0; b < opt.batches; ++b) {
        const std::size_t lo = b * opt.batch_size;
        const EmbeddingSet gen = slice(cand.audio, lo, opt.batch_size);
        mmd.push_back(ref.mmd2(gen));
        fd.push_back(ref.frechet(gen));
        const auto dc = ref.density_coverage(gen);
        dens.push_back(dc.density);
        cov.push_back(dc.coverage);
        if (cand.contexts && ref.has_pairs())
            apa.push_back(ref.adherence(slice(*cand.contexts, lo, opt.batch_size), gen, opt.seed + b).score);
        if (cand.descriptions) cs.push_back(clap_score(slice(*cand.descriptions, lo, opt.batch_size), gen));
    }
    MetricReport r;
    r.batch_count = opt.batches;
    r.batch_size = opt.batch_size;
    r.add("mmd2", mmd);
    r.add("fd", fd);
    r.add("density", dens);
    r.add("coverage", cov);
    if (!apa.empty()) r.add("apa", apa);
    if (!cs.empty()) r.add("cs", cs);
    return r;
}

}  // namespace darf::metrics

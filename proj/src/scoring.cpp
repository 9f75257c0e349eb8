#include "duse/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace duse::scoring {

std::string_view name(score_method m) {
    switch (m) {
        case score_method::margin: return "margin";
        case score_method::entropy: return "entropy";
        case score_method::least_confidence: return "least_confidence";
        case score_method::grand: return "grand";
        case score_method::forgetting: return "forgetting";
    }
    return "?";
}

score_method parse_score_method(std::string_view text) {
    for (auto m : {score_method::margin, score_method::entropy, score_method::least_confidence, score_method::grand,
                   score_method::forgetting})
        if (name(m) == text) return m;
    throw invalid_input("unknown score method: " + std::string(text));
}

std::string_view name(direction d) { return d == direction::min ? "min" : "max"; }

direction direction_of(score_method m) { return m == score_method::margin ? direction::min : direction::max; }

void score_report::validate(std::size_t num_classes) const {
    if (scores.size() != indices.size())
        throw invalid_input("score_report: " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(indices.size()) + " indices");
    const double entropy_cap = std::log(static_cast<double>(num_classes)) + 1e-12;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i];
        if (!std::isfinite(s)) throw invalid_input("score_report: non-finite score at position " + std::to_string(i));
        const bool ok = method == score_method::margin             ? (s >= 0.0 && s <= 1.0)
                        : method == score_method::entropy          ? (s >= 0.0 && s <= entropy_cap)
                        : method == score_method::least_confidence ? (s >= 0.0 && s <= 1.0)
                                                                   : s >= 0.0;
        if (!ok) throw invalid_input("score_report: score " + std::to_string(s) + " outside the range of " +
                                     std::string(name(method)));
    }
}

std::vector<double> softmax(std::span<const float> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    double peak = logits[0];
    for (float v : logits) peak = std::max<double>(peak, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - peak);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

double margin_uncertainty(std::span<const double> probs) {
    if (probs.size() < 2) throw invalid_input("margin_uncertainty: need at least two classes");
    double first = -std::numeric_limits<double>::infinity();
    double second = first;
    for (double p : probs) {
        if (p > first) {
            second = first;
            first = p;
        } else if (p > second) {
            second = p;
        }
    }
    return std::clamp(first - second, 0.0, 1.0);
}

double entropy_score(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return std::max(h, 0.0);
}

double least_confidence_score(std::span<const double> probs) {
    double top = 0.0;
    for (double p : probs) top = std::max(top, p);
    return std::clamp(1.0 - top, 0.0, 1.0);
}

score_report uncertainty_scores(const nnet::model_state& model, const dataset& ds, std::span<const std::size_t> indices,
                                score_method method) {
    if (method == score_method::grand || method == score_method::forgetting)
        throw invalid_input("uncertainty_scores: " + std::string(name(method)) + " is not a softmax score");
    score_report report;
    report.method = method;
    report.dir = direction_of(method);
    report.indices.assign(indices.begin(), indices.end());
    report.model_digest = nnet::model_digest(model);
    const auto batch = nnet::gather(ds, indices);
    const auto fwd = nnet::forward(model, batch);
    report.scores.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto p = softmax(fwd.logits_of(i));
        switch (method) {
            case score_method::margin: report.scores[i] = margin_uncertainty(p); break;
            case score_method::entropy: report.scores[i] = entropy_score(p); break;
            default: report.scores[i] = least_confidence_score(p); break;
        }
    }
    return report;
}

score_report grand_scores(const dataset& ds, std::span<const std::size_t> target, std::span<const std::size_t> auxiliary,
                          const grand_options& opts) {
    if (opts.num_runs == 0) throw invalid_input("grand_scores: num_runs must be >= 1");
    if (auxiliary.empty()) throw invalid_input("grand_scores: empty auxiliary set");
    const auto train_set = nnet::gather(ds, target);
    const auto aux = nnet::gather(ds, auxiliary);

    score_report report;
    report.method = score_method::grand;
    report.dir = direction::max;
    report.indices.assign(auxiliary.begin(), auxiliary.end());
    report.scores.assign(auxiliary.size(), 0.0);

    std::uint64_t digest = fnv1a_offset;
    for (std::uint32_t r = 0; r < opts.num_runs; ++r) {
        nnet::train_config cfg;
        cfg.epochs = opts.short_epochs;
        cfg.batch_size = opts.batch_size;
        cfg.learning_rate = opts.learning_rate;
        cfg.shuffle_seed = derive_seed(opts.base_seed, {r});
        const auto trained = nnet::train(nnet::init_model(opts.base_seed + r, opts.arch), train_set, cfg).model;
        const auto norms = nnet::per_sample_gradient_norms(trained, aux);
        for (std::size_t i = 0; i < norms.size(); ++i) report.scores[i] += norms[i];
        const std::uint64_t d = nnet::model_digest(trained);
        digest = fnv1a64(std::as_bytes(std::span(&d, 1)), digest);
    }
    for (double& s : report.scores) s /= static_cast<double>(opts.num_runs);
    report.model_digest = digest;
    return report;
}

std::vector<std::uint32_t> forgetting_counts(const nnet::correctness_log& log) {
    if (log.epochs < 2) throw invalid_input("forgetting_counts: need at least 2 epochs of correctness");
    std::vector<std::uint32_t> counts(log.samples, 0);
    for (std::size_t i = 0; i < log.samples; ++i) {
        bool ever_correct = log.at(0, i);
        std::uint32_t events = 0;
        for (std::size_t e = 1; e < log.epochs; ++e) {
            if (log.at(e - 1, i) && !log.at(e, i)) ++events;
            ever_correct = ever_correct || log.at(e, i);
        }
        counts[i] = ever_correct ? events : static_cast<std::uint32_t>(log.epochs);
    }
    return counts;
}

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const std::size_t> weights) {
    const std::size_t weight_sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
    std::vector<std::size_t> out(weights.size(), 0);
    if (total == 0) return out;
    if (weight_sum == 0) throw sizing_error("largest_remainder: all weights are zero");
    std::vector<std::size_t> remainder(weights.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        // exact integer arithmetic: quota = total * w / sum
        const unsigned __int128 num = static_cast<unsigned __int128>(total) * weights[i];
        out[i] = static_cast<std::size_t>(num / weight_sum);
        remainder[i] = static_cast<std::size_t>(num % weight_sum);
        assigned += out[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
    return out;
}

index_list herding_select(std::span<const float> features, std::size_t dim, std::span<const std::uint16_t> labels,
                          std::span<const std::size_t> per_class_budget) {
    if (dim == 0 || features.size() != labels.size() * dim)
        throw invalid_input("herding_select: feature matrix does not match labels x dim");
    std::vector<index_list> members(per_class_budget.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= per_class_budget.size())
            throw invalid_input("herding_select: label " + std::to_string(labels[i]) + " has no budget entry");
        members[labels[i]].push_back(i);
    }

    index_list selected;
    for (std::size_t c = 0; c < per_class_budget.size(); ++c) {
        const auto& pool = members[c];
        const std::size_t budget = per_class_budget[c];
        if (budget > pool.size())
            throw sizing_error("herding_select: class " + std::to_string(c) + " budget " + std::to_string(budget) +
                               " exceeds its " + std::to_string(pool.size()) + " candidates");
        if (budget == 0) continue;

        std::vector<double> mean(dim, 0.0);
        for (std::size_t i : pool)
            for (std::size_t d = 0; d < dim; ++d) mean[d] += features[i * dim + d];
        for (double& m : mean) m /= static_cast<double>(pool.size());

        std::vector<double> running(dim, 0.0);
        std::vector<bool> taken(pool.size(), false);
        for (std::size_t step = 0; step < budget; ++step) {
            const double inv = 1.0 / static_cast<double>(step + 1);
            std::size_t best = pool.size();
            double best_dist = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < pool.size(); ++k) {
                if (taken[k]) continue;
                const float* x = features.data() + pool[k] * dim;
                double dist = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double diff = (running[d] + x[d]) * inv - mean[d];
                    dist += diff * diff;
                }
                if (dist < best_dist) {
                    best_dist = dist;
                    best = k;
                }
            }
            taken[best] = true;
            const float* x = features.data() + pool[best] * dim;
            for (std::size_t d = 0; d < dim; ++d) running[d] += x[d];
            selected.push_back(pool[best]);
        }
    }
    return selected;
}

std::string score_report_csv(const score_report& report) {
    std::string out = "# method=" + std::string(name(report.method)) + " direction=" + std::string(name(report.dir)) +
                      " model_digest=" + digest_hex(report.model_digest) + "\n";
    out += "aux_index,score\n";
    char buf[64];
    for (std::size_t i = 0; i < report.indices.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", report.indices[i], report.scores[i]);
        out += buf;
    }
    return out;
}

void write_score_report(const score_report& report, const std::filesystem::path& path) {
    write_file_atomic(path, score_report_csv(report));
}

}  // namespace duse::scoring

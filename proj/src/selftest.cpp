#include "duse/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "duse/expansion.hpp"

namespace duse::oracle {

namespace {

enum tensor_id { c1w, c1b, c2w, c2b, f1w, f1b, f2w, f2b };

double relu(double v) { return v > 0.0 ? v : 0.0; }

// Output of a zero-padded 'same' convolution followed by ReLU, one element at a time.
std::vector<double> conv_relu(const std::vector<double>& in, std::size_t in_ch, std::size_t len,
                              const std::vector<double>& w, const std::vector<double>& b, std::size_t out_ch,
                              std::size_t kernel, std::vector<std::uint8_t>* sig) {
    const long pad = static_cast<long>(kernel / 2);
    std::vector<double> out(out_ch * len);
    for (std::size_t f = 0; f < out_ch; ++f)
        for (std::size_t t = 0; t < len; ++t) {
            double z = b[f];
            for (std::size_t c = 0; c < in_ch; ++c)
                for (std::size_t k = 0; k < kernel; ++k) {
                    const long src = static_cast<long>(t) + static_cast<long>(k) - pad;
                    if (src < 0 || src >= static_cast<long>(len)) continue;
                    z += w[(f * in_ch + c) * kernel + k] * in[c * len + static_cast<std::size_t>(src)];
                }
            out[f * len + t] = relu(z);
            if (sig) sig->push_back(z > 0.0);
        }
    return out;
}

std::vector<double> pool_pairs(const std::vector<double>& in, std::size_t ch, std::size_t len,
                               std::vector<std::uint8_t>* sig) {
    std::vector<double> out(ch * (len / 2));
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t t = 0; t < len / 2; ++t) {
            const double a = in[c * len + 2 * t], b = in[c * len + 2 * t + 1];
            out[c * (len / 2) + t] = std::max(a, b);
            if (sig) sig->push_back(b > a);
        }
    return out;
}

// Which ReLUs are active and which pool inputs win: the loss is smooth in the
// parameters as long as this signature does not change.
std::vector<double> logits_with_signature(const nnet::architecture& a, const tensor_set& p, std::span<const float> iq,
                                          std::vector<std::uint8_t>* sig) {
    const std::size_t L = a.signal_len;
    std::vector<double> x(iq.begin(), iq.end());
    const auto a1 = conv_relu(x, 2, L, p[c1w], p[c1b], a.conv1_filters, a.conv1_kernel, sig);
    const auto p1 = pool_pairs(a1, a.conv1_filters, L, sig);
    const auto a2 = conv_relu(p1, a.conv1_filters, L / 2, p[c2w], p[c2b], a.conv2_filters, a.conv2_kernel, sig);
    const auto flat = pool_pairs(a2, a.conv2_filters, L / 2, sig);

    std::vector<double> h(a.hidden);
    for (std::size_t j = 0; j < a.hidden; ++j) {
        double z = p[f1b][j];
        for (std::size_t d = 0; d < flat.size(); ++d) z += p[f1w][j * flat.size() + d] * flat[d];
        h[j] = relu(z);
        if (sig) sig->push_back(z > 0.0);
    }
    std::vector<double> logits(a.num_classes);
    for (std::size_t c = 0; c < a.num_classes; ++c) {
        double z = p[f2b][c];
        for (std::size_t j = 0; j < a.hidden; ++j) z += p[f2w][c * a.hidden + j] * h[j];
        logits[c] = z;
    }
    return logits;
}

double loss_with_signature(const nnet::architecture& arch, const tensor_set& params, nnet::batch_view batch,
                           std::vector<std::uint8_t>* sig) {
    double total = 0.0;
    for (const signal_record* r : batch) {
        const auto z = logits_with_signature(arch, params, r->iq, sig);
        double lse = 0.0;
        for (double v : z) lse += std::exp(v);
        total += std::log(lse) - z[r->label];
    }
    return total / static_cast<double>(batch.size());
}

bool more_informative(scoring::direction dir, double a, std::size_t ia, double b, std::size_t ib) {
    if (a == b) return ia < ib;
    return dir == scoring::direction::min ? a < b : a > b;
}

}  // namespace

tensor_set to_double(const nnet::parameters& p) {
    tensor_set out;
    const auto t = p.tensors();
    for (std::size_t k = 0; k < nnet::num_tensors; ++k) out[k].assign(t[k].begin(), t[k].end());
    return out;
}

std::vector<double> reference_logits(const nnet::architecture& a, const tensor_set& p, std::span<const float> iq) {
    return logits_with_signature(a, p, iq, nullptr);
}

double reference_loss(const nnet::architecture& arch, const tensor_set& params, nnet::batch_view batch) {
    return loss_with_signature(arch, params, batch, nullptr);
}

tensor_set finite_difference_gradients(const nnet::model_state& model, nnet::batch_view batch, double step) {
    tensor_set params = to_double(model.params);
    std::vector<std::uint8_t> base, probe;
    loss_with_signature(model.arch, params, batch, &base);

    tensor_set grads;
    for (std::size_t k = 0; k < nnet::num_tensors; ++k) {
        grads[k].resize(params[k].size());
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            const double saved = params[k][i];
            // A probe that crosses a ReLU or pooling switch measures the secant
            // across a kink, not the derivative; shrink the step until both
            // probes stay on the same smooth piece.
            for (double h = step;; h *= 0.1) {
                probe.clear();
                params[k][i] = saved + h;
                const double up = loss_with_signature(model.arch, params, batch, &probe);
                params[k][i] = saved - h;
                const double down = loss_with_signature(model.arch, params, batch, &probe);
                grads[k][i] = (up - down) / (2.0 * h);
                const bool smooth = std::equal(base.begin(), base.end(), probe.begin()) &&
                                    std::equal(base.begin(), base.end(), probe.begin() + static_cast<std::ptrdiff_t>(base.size()));
                if (smooth || h < 1e-8) break;
            }
            params[k][i] = saved;
        }
    }
    return grads;
}

std::array<double, nnet::num_tensors> max_relative_errors(const nnet::parameters& analytic, const tensor_set& numeric,
                                                          double floor) {
    std::array<double, nnet::num_tensors> worst{};
    const auto t = analytic.tensors();
    for (std::size_t k = 0; k < nnet::num_tensors; ++k)
        for (std::size_t i = 0; i < t[k].size(); ++i) {
            const double a = t[k][i];
            const double n = numeric[k][i];
            const double denom = std::max({std::abs(a), std::abs(n), floor});
            worst[k] = std::max(worst[k], std::abs(a - n) / denom);
        }
    return worst;
}

std::vector<double> softmax_naive(std::span<const double> logits) {
    // exp(F_j) / sum_c exp(F_c), evaluated as 1 / sum_c exp(F_c - F_j) to stay finite.
    std::vector<double> p(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        long double denom = 0.0L;
        for (double v : logits) denom += std::exp(static_cast<long double>(v) - logits[j]);
        p[j] = static_cast<double>(1.0L / denom);
    }
    return p;
}

double margin_by_sort(std::span<const double> probs) {
    std::vector<double> sorted(probs.begin(), probs.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    return sorted.at(0) - sorted.at(1);
}

double entropy_direct(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) h += p == 0.0 ? 0.0 : -p * std::log(p);
    return h;
}

double least_confidence_by_sort(std::span<const double> probs) {
    std::vector<double> sorted(probs.begin(), probs.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    return 1.0 - sorted.at(0);
}

index_list topk_by_rank_counting(std::span<const double> scores, std::span<const std::size_t> indices,
                                 scoring::direction dir, std::size_t k) {
    index_list out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::size_t better = 0;
        for (std::size_t j = 0; j < scores.size(); ++j)
            if (j != i && more_informative(dir, scores[j], indices[j], scores[i], indices[i])) ++better;
        if (better < k) out.push_back(indices[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t herding_step_argmin(std::span<const float> features, std::size_t dim,
                                std::span<const std::size_t> class_members, std::span<const std::size_t> selected) {
    std::vector<double> target(dim, 0.0);
    for (std::size_t m : class_members)
        for (std::size_t d = 0; d < dim; ++d) target[d] += features[m * dim + d] / static_cast<double>(class_members.size());

    std::size_t best = std::numeric_limits<std::size_t>::max();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t m : class_members) {
        if (std::find(selected.begin(), selected.end(), m) != selected.end()) continue;
        double dist = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            double sum = features[m * dim + d];
            for (std::size_t s : selected) sum += features[s * dim + d];
            const double diff = sum / static_cast<double>(selected.size() + 1) - target[d];
            dist += diff * diff;
        }
        if (dist < best_dist || (dist == best_dist && m < best)) {
            best_dist = dist;
            best = m;
        }
    }
    return best;
}

nnet::architecture random_small_architecture(rng& gen) {
    nnet::architecture a;
    a.signal_len = static_cast<std::uint32_t>(4 * (2 + gen.below(3)));  // 8, 12, 16
    a.conv1_filters = static_cast<std::uint32_t>(2 + gen.below(3));
    a.conv1_kernel = gen.below(2) ? 5 : 3;
    a.conv2_filters = static_cast<std::uint32_t>(2 + gen.below(3));
    a.conv2_kernel = gen.below(2) ? 5 : 3;
    a.hidden = static_cast<std::uint32_t>(4 + gen.below(5));
    a.num_classes = static_cast<std::uint32_t>(2 + gen.below(4));
    return a;
}

std::vector<signal_record> random_records(const nnet::architecture& arch, std::size_t count, rng& gen) {
    std::vector<signal_record> out(count);
    for (auto& r : out) {
        r.label = static_cast<std::uint16_t>(gen.below(arch.num_classes));
        r.iq.resize(arch.input_size());
        for (float& v : r.iq) v = static_cast<float>(gen.normal());
    }
    return out;
}

suite_result gradient_suite(std::size_t configs, std::uint64_t seed, double tolerance, std::ostream* log) {
    suite_result res;
    rng gen(seed);
    for (std::size_t cfg = 0; cfg < configs; ++cfg) {
        const auto arch = random_small_architecture(gen);
        auto model = nnet::init_model(gen.next_u64(), arch);
        for (auto t : model.params.tensors())
            for (float& v : t) v += static_cast<float>(0.1 * gen.normal());
        const auto records = random_records(arch, 3, gen);
        std::vector<const signal_record*> batch;
        for (const auto& r : records) batch.push_back(&r);

        const auto analytic = nnet::loss_and_gradients(model, batch);
        const auto numeric = finite_difference_gradients(model, batch, 1e-3);
        const auto errs = max_relative_errors(analytic.grads, numeric, 1e-5);
        ++res.cases;
        for (std::size_t k = 0; k < nnet::num_tensors; ++k) {
            res.worst = std::max(res.worst, errs[k]);
            if (errs[k] >= tolerance) {
                res.passed = false;
                if (log) *log << "  config " << cfg << " tensor " << nnet::tensor_names[k] << " rel err " << errs[k] << "\n";
            }
        }
    }
    return res;
}

suite_result scoring_suite(std::size_t instances, std::uint64_t seed, std::ostream* log) {
    using scoring::score_method;
    suite_result res;
    rng gen(seed);
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t C = 2 + gen.below(7);
        const std::size_t N = 1 + gen.below(64);
        const score_method method = std::array{score_method::margin, score_method::entropy,
                                               score_method::least_confidence}[gen.below(3)];
        const double spread = 0.5 + 4.0 * gen.uniform01();

        std::vector<std::vector<float>> logits(N, std::vector<float>(C));
        for (std::size_t i = 0; i < N; ++i) {
            if (i > 0 && gen.uniform01() < 0.2) {
                logits[i] = logits[gen.below(i)];  // exact duplicate -> exact score tie
                continue;
            }
            for (float& v : logits[i]) v = static_cast<float>(spread * gen.normal());
        }

        scoring::score_report report;
        report.method = method;
        report.dir = scoring::direction_of(method);
        std::vector<double> oracle_scores(N);
        for (std::size_t i = 0; i < N; ++i) {
            report.indices.push_back(3 * i + gen.below(3));  // sparse, increasing dataset indices
            const auto p = scoring::softmax(logits[i]);
            const std::vector<double> z(logits[i].begin(), logits[i].end());
            const auto q = softmax_naive(z);
            double impl = 0.0, ref = 0.0;
            switch (method) {
                case score_method::margin: impl = scoring::margin_uncertainty(p); ref = margin_by_sort(q); break;
                case score_method::entropy: impl = scoring::entropy_score(p); ref = entropy_direct(q); break;
                default: impl = scoring::least_confidence_score(p); ref = least_confidence_by_sort(q); break;
            }
            report.scores.push_back(impl);
            oracle_scores[i] = ref;
            if (std::abs(impl - ref) > 1e-9) {
                res.passed = false;
                if (log) *log << "  instance " << inst << " score mismatch " << impl << " vs " << ref << "\n";
            }
            res.worst = std::max(res.worst, std::abs(impl - ref));
        }
        const std::size_t k = gen.below(N + 1);
        const auto picked = expansion::select_topk_uncertain(report, k, report.indices);
        const auto expected = topk_by_rank_counting(oracle_scores, report.indices, report.dir, k);
        ++res.cases;
        if (picked != expected) {
            res.passed = false;
            if (log) *log << "  instance " << inst << " top-" << k << " selection differs from oracle\n";
        }
    }
    return res;
}

suite_result herding_suite(std::size_t trials, std::uint64_t seed, std::ostream* log) {
    suite_result res;
    rng gen(seed);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t classes = 1 + gen.below(4);
        const std::size_t dim = 2 + gen.below(7);
        std::vector<std::uint16_t> labels;
        for (std::size_t c = 0; c < classes; ++c) {
            const std::size_t n = 1 + gen.below(16);
            for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<std::uint16_t>(c));
        }
        // interleave classes so positions are not grouped
        shuffle(labels, gen);
        std::vector<float> features(labels.size() * dim);
        for (float& v : features) v = static_cast<float>(gen.normal());

        std::vector<index_list> members(classes);
        for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
        std::vector<std::size_t> budget(classes);
        for (std::size_t c = 0; c < classes; ++c) budget[c] = gen.below(members[c].size() + 1);

        const auto picked = scoring::herding_select(features, dim, labels, budget);
        std::size_t pos = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            index_list chosen;
            for (std::size_t step = 0; step < budget[c]; ++step, ++pos) {
                const std::size_t expected = herding_step_argmin(features, dim, members[c], chosen);
                ++res.cases;
                if (pos >= picked.size() || picked[pos] != expected) {
                    res.passed = false;
                    if (log) *log << "  trial " << trial << " class " << c << " step " << step << " differs\n";
                    break;
                }
                chosen.push_back(expected);
            }
        }
        if (pos != picked.size()) res.passed = false;
    }
    return res;
}

}  // namespace duse::oracle

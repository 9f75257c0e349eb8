#include "duse/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "json.hpp"

namespace duse::expansion {

namespace {

constexpr method all_methods[] = {method::duse,   method::duse_balanced,    method::duse_oneshot, method::margin,
                                  method::entropy, method::least_confidence, method::grand,        method::herding,
                                  method::forgetting, method::random};

// Ordering key: better score first, then lower dataset index.
bool more_informative(scoring::direction dir, double sa, std::size_t ia, double sb, std::size_t ib) {
    if (sa != sb) return dir == scoring::direction::min ? sa < sb : sa > sb;
    return ia < ib;
}

struct ranked {
    double score;
    std::size_t index;
};

std::vector<ranked> rank_candidates(const scoring::score_report& report, std::span<const std::size_t> candidates) {
    std::unordered_map<std::size_t, double> lookup;
    lookup.reserve(report.indices.size());
    for (std::size_t i = 0; i < report.indices.size(); ++i) lookup.emplace(report.indices[i], report.scores[i]);
    std::vector<ranked> out;
    out.reserve(candidates.size());
    for (std::size_t c : candidates) {
        const auto it = lookup.find(c);
        if (it == lookup.end()) throw invalid_input("candidate " + std::to_string(c) + " has no score in the report");
        out.push_back({it->second, c});
    }
    std::sort(out.begin(), out.end(), [&](const ranked& a, const ranked& b) {
        return more_informative(report.dir, a.score, a.index, b.score, b.index);
    });
    return out;
}

index_list set_union(const index_list& a, const index_list& b) {
    index_list out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

index_list set_minus(const index_list& a, const index_list& b) {
    index_list out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::size_t checked_budget(const plan& p, const split_indices& splits) {
    const std::size_t budget = budget_from_rate(p.rate, splits.auxiliary.size());
    if (budget > splits.auxiliary.size())
        throw sizing_error("budget " + std::to_string(budget) + " exceeds auxiliary pool of " +
                           std::to_string(splits.auxiliary.size()));
    if (budget < p.effective_rounds())
        throw invalid_input("plan selects fewer samples (" + std::to_string(budget) + ") than rounds (" +
                            std::to_string(p.effective_rounds()) + ")");
    if (p.epochs_per_round == 0) throw invalid_input("plan: epochs_per_round must be positive");
    return budget;
}

nnet::train_config round_config(const plan& p, std::uint32_t round, std::uint32_t epochs) {
    nnet::train_config cfg;
    cfg.epochs = epochs;
    cfg.batch_size = p.batch_size;
    cfg.learning_rate = p.learning_rate;
    cfg.shuffle_seed = derive_seed(p.seed, {round});
    return cfg;
}

void finish(result& r, const dataset& ds, const split_indices& splits) {
    index_list all_selected;
    for (const auto& s : r.per_round_selected) all_selected = set_union(all_selected, s);
    r.expanded_target = set_union(splits.target, all_selected);
    r.per_class_selected_counts = class_counts(ds, all_selected);
}

scoring::score_method scorer_for(method m) {
    switch (m) {
        case method::entropy: return scoring::score_method::entropy;
        case method::least_confidence: return scoring::score_method::least_confidence;
        default: return scoring::score_method::margin;
    }
}

index_list select_from_report(const scoring::score_report& report, const dataset& ds, const index_list& target,
                              const index_list& candidates, std::size_t k, bool balanced,
                              std::vector<std::string>& diagnostics) {
    if (!balanced) return select_topk_uncertain(report, k, candidates);
    std::vector<std::uint16_t> labels;
    labels.reserve(candidates.size());
    for (std::size_t i : candidates) labels.push_back(ds.records[i].label);
    const auto totals = class_counts(ds, target);
    auto quotas = balanced_quotas(k, totals, labels);
    diagnostics.insert(diagnostics.end(), quotas.diagnostics.begin(), quotas.diagnostics.end());
    return select_balanced(report, ds, candidates, quotas);
}

}  // namespace

std::string_view name(method m) {
    switch (m) {
        case method::duse: return "duse";
        case method::duse_balanced: return "duse_balanced";
        case method::duse_oneshot: return "duse_oneshot";
        case method::margin: return "margin";
        case method::entropy: return "entropy";
        case method::least_confidence: return "least_confidence";
        case method::grand: return "grand";
        case method::herding: return "herding";
        case method::forgetting: return "forgetting";
        case method::random: return "random";
    }
    return "?";
}

method parse_method(std::string_view text) {
    for (method m : all_methods)
        if (name(m) == text) return m;
    throw invalid_input("unknown expansion method: " + std::string(text));
}

bool is_iterative(method m) { return m == method::duse || m == method::duse_balanced; }

std::uint32_t plan::effective_rounds() const { return is_iterative(method) ? rounds : 1; }

std::size_t budget_from_rate(double rate, std::size_t aux_size) {
    if (!(rate > 0.0 && rate <= 1.0)) throw invalid_input("expansion rate must lie in (0, 1]");
    const auto budget = static_cast<std::size_t>(std::llround(rate * static_cast<double>(aux_size)));
    if (budget == 0)
        throw invalid_input("expansion rate " + std::to_string(rate) + " of " + std::to_string(aux_size) +
                            " auxiliary samples rounds to an empty budget");
    return budget;
}

std::vector<std::size_t> round_quotas(std::size_t budget, std::size_t rounds) {
    if (rounds == 0) throw invalid_input("round_quotas: rounds must be positive");
    std::vector<std::size_t> q(rounds, budget / rounds);
    for (std::size_t i = 0; i < budget % rounds; ++i) ++q[i];
    return q;
}

index_list select_topk_uncertain(const scoring::score_report& report, std::size_t k,
                                 std::span<const std::size_t> candidates) {
    if (k > candidates.size())
        throw sizing_error("select_topk_uncertain: k = " + std::to_string(k) + " exceeds " +
                           std::to_string(candidates.size()) + " candidates");
    const auto ranking = rank_candidates(report, candidates);
    index_list out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(ranking[i].index);
    std::sort(out.begin(), out.end());
    return out;
}

quota_plan balanced_quotas(std::size_t k, std::span<const std::size_t> current_class_totals,
                           std::span<const std::uint16_t> candidate_labels) {
    const std::size_t classes = current_class_totals.size();
    quota_plan out;
    out.per_class.assign(classes, 0);
    if (classes == 0) {
        out.spill = k;
        return out;
    }
    std::vector<std::size_t> available(classes, 0);
    for (auto l : candidate_labels) {
        if (l >= classes) throw invalid_input("balanced_quotas: candidate label " + std::to_string(l) + " out of range");
        ++available[l];
    }
    for (std::size_t slot = 0; slot < k; ++slot) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (current_class_totals[c] + out.per_class[c] < current_class_totals[best] + out.per_class[best]) best = c;
        ++out.per_class[best];
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (out.per_class[c] > available[c]) {
            const std::size_t missing = out.per_class[c] - available[c];
            out.diagnostics.push_back("class " + std::to_string(c) + " depleted: quota " +
                                      std::to_string(out.per_class[c]) + ", available " + std::to_string(available[c]) +
                                      "; " + std::to_string(missing) + " spilled to next-best candidates");
            out.spill += missing;
            out.per_class[c] = available[c];
        }
    }
    return out;
}

index_list select_balanced(const scoring::score_report& report, const dataset& ds,
                           std::span<const std::size_t> candidates, const quota_plan& quotas) {
    std::size_t total = quotas.spill;
    for (std::size_t q : quotas.per_class) total += q;
    if (total > candidates.size())
        throw sizing_error("select_balanced: " + std::to_string(total) + " picks from " +
                           std::to_string(candidates.size()) + " candidates");
    const auto ranking = rank_candidates(report, candidates);
    std::vector<std::size_t> taken(quotas.per_class.size(), 0);
    std::vector<bool> used(ranking.size(), false);
    index_list out;
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        const auto label = ds.records[ranking[r].index].label;
        if (label < taken.size() && taken[label] < quotas.per_class[label]) {
            ++taken[label];
            used[r] = true;
            out.push_back(ranking[r].index);
        }
    }
    std::size_t spill = quotas.spill;
    for (std::size_t r = 0; r < ranking.size() && spill > 0; ++r) {
        if (used[r]) continue;
        out.push_back(ranking[r].index);
        --spill;
    }
    std::sort(out.begin(), out.end());
    return out;
}

nnet::architecture architecture_for(const dataset& ds) {
    nnet::architecture arch;
    arch.signal_len = ds.signal_len;
    arch.num_classes = ds.num_classes;
    return arch;
}

result duse_expand(const dataset& ds, const split_indices& splits, const plan& p, std::uint64_t model_seed) {
    if (p.method != method::duse && p.method != method::duse_balanced && p.method != method::duse_oneshot)
        throw invalid_input("duse_expand: method " + std::string(name(p.method)) + " is not a DUSE variant");
    const std::size_t budget = checked_budget(p, splits);
    const auto quotas = round_quotas(budget, p.effective_rounds());
    const auto arch = architecture_for(ds);

    result r;
    r.used_plan = p;
    index_list target = splits.target;
    index_list aux = splits.auxiliary;
    nnet::model_state model = nnet::init_model(model_seed, arch);

    for (std::uint32_t round = 0; round < quotas.size(); ++round) {
        if (round > 0 && !p.warm_start) model = nnet::init_model(model_seed, arch);
        const auto train_set = nnet::gather(ds, target);
        model = nnet::train(std::move(model), train_set, round_config(p, round, p.epochs_per_round)).model;

        auto report = scoring::uncertainty_scores(model, ds, aux, scoring::score_method::margin);
        const auto picked = select_from_report(report, ds, target, aux, quotas[round], p.balanced(), r.diagnostics);

        r.model_digests.push_back(report.model_digest);
        r.per_round_selected.push_back(picked);
        r.round_reports.push_back(std::move(report));
        if (p.keep_models) r.round_models.push_back(model);

        target = set_union(target, picked);
        aux = set_minus(aux, picked);
    }
    finish(r, ds, splits);
    return r;
}

result oneshot_expand(const dataset& ds, const split_indices& splits, const plan& p, std::uint64_t model_seed) {
    if (is_iterative(p.method))
        throw invalid_input("oneshot_expand: method " + std::string(name(p.method)) + " is iterative");
    const std::size_t budget = checked_budget(p, splits);
    const auto arch = architecture_for(ds);
    const index_list& aux = splits.auxiliary;

    result r;
    r.used_plan = p;
    index_list picked;

    switch (p.method) {
        case method::random: {
            index_list pool = aux;
            rng gen(p.seed);
            shuffle(pool, gen);
            picked.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(budget));
            std::sort(picked.begin(), picked.end());
            break;
        }
        case method::grand: {
            scoring::grand_options opts;
            opts.num_runs = p.grand_runs;
            opts.short_epochs = p.grand_epochs;
            opts.base_seed = model_seed;
            opts.batch_size = p.batch_size;
            opts.learning_rate = p.learning_rate;
            opts.arch = arch;
            auto report = scoring::grand_scores(ds, splits.target, aux, opts);
            picked = select_from_report(report, ds, splits.target, aux, budget, p.balanced(), r.diagnostics);
            r.model_digests.push_back(report.model_digest);
            r.round_reports.push_back(std::move(report));
            break;
        }
        case method::forgetting: {
            // Probe trained on target + auxiliary; forgetting is counted on the auxiliary part only.
            const index_list pool = set_union(splits.target, aux);
            auto cfg = round_config(p, 0, p.probe_epochs);
            cfg.record_correctness = true;
            const auto trained = nnet::train(nnet::init_model(model_seed, arch), nnet::gather(ds, pool), cfg);
            const auto counts = scoring::forgetting_counts(*trained.log);

            scoring::score_report report;
            report.method = scoring::score_method::forgetting;
            report.dir = scoring::direction::max;
            report.model_digest = nnet::model_digest(trained.model);
            std::size_t a = 0;
            for (std::size_t k = 0; k < pool.size() && a < aux.size(); ++k) {
                if (pool[k] != aux[a]) continue;
                report.indices.push_back(aux[a]);
                report.scores.push_back(counts[k]);
                ++a;
            }
            picked = select_from_report(report, ds, splits.target, aux, budget, p.balanced(), r.diagnostics);
            r.model_digests.push_back(report.model_digest);
            if (p.keep_models) r.round_models.push_back(trained.model);
            r.round_reports.push_back(std::move(report));
            break;
        }
        case method::herding: {
            const auto model =
                nnet::train(nnet::init_model(model_seed, arch), nnet::gather(ds, splits.target),
                            round_config(p, 0, p.epochs_per_round))
                    .model;
            const auto fwd = nnet::forward(model, nnet::gather(ds, aux));
            std::vector<std::uint16_t> labels;
            labels.reserve(aux.size());
            for (std::size_t i : aux) labels.push_back(ds.records[i].label);
            const auto budgets = scoring::largest_remainder(budget, class_counts(ds, aux));
            const auto positions = scoring::herding_select(fwd.features, fwd.feature_dim, labels, budgets);
            for (std::size_t pos : positions) picked.push_back(aux[pos]);
            std::sort(picked.begin(), picked.end());
            r.model_digests.push_back(nnet::model_digest(model));
            if (p.keep_models) r.round_models.push_back(model);
            break;
        }
        default: {
            const auto model =
                nnet::train(nnet::init_model(model_seed, arch), nnet::gather(ds, splits.target),
                            round_config(p, 0, p.epochs_per_round))
                    .model;
            auto report = scoring::uncertainty_scores(model, ds, aux, scorer_for(p.method));
            picked = select_from_report(report, ds, splits.target, aux, budget, p.balanced(), r.diagnostics);
            r.model_digests.push_back(report.model_digest);
            if (p.keep_models) r.round_models.push_back(model);
            r.round_reports.push_back(std::move(report));
            break;
        }
    }
    r.per_round_selected.push_back(std::move(picked));
    finish(r, ds, splits);
    return r;
}

result expand(const dataset& ds, const split_indices& splits, const plan& p, std::uint64_t model_seed) {
    if (is_iterative(p.method)) return duse_expand(ds, splits, p, model_seed);
    return oneshot_expand(ds, splits, p, model_seed);
}

std::string result::to_json() const {
    nlohmann::ordered_json j;
    auto& jp = j["plan"];
    jp["method"] = name(used_plan.method);
    jp["rate"] = used_plan.rate;
    jp["rounds"] = used_plan.effective_rounds();
    jp["epochs"] = used_plan.epochs_per_round;
    jp["seed"] = used_plan.seed;
    jp["balance"] = used_plan.balanced();
    jp["warm_start"] = used_plan.warm_start;
    jp["batch"] = used_plan.batch_size;
    jp["lr"] = used_plan.learning_rate;
    j["per_round_selected"] = per_round_selected;
    j["expanded_target"] = expanded_target;
    j["per_class_selected_counts"] = per_class_selected_counts;
    auto& digests = j["model_digests"] = nlohmann::ordered_json::array();
    for (auto d : model_digests) digests.push_back(digest_hex(d));
    j["diagnostics"] = diagnostics;
    return j.dump() + "\n";
}

void write_result(const result& r, const std::filesystem::path& path) { write_file_atomic(path, r.to_json()); }

result read_result(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open expansion result " + path.string());
    const auto j = nlohmann::json::parse(in);
    result r;
    const auto& jp = j.at("plan");
    r.used_plan.method = parse_method(jp.at("method").get<std::string>());
    r.used_plan.rate = jp.at("rate").get<double>();
    r.used_plan.rounds = jp.at("rounds").get<std::uint32_t>();
    r.used_plan.epochs_per_round = jp.at("epochs").get<std::uint32_t>();
    r.used_plan.seed = jp.at("seed").get<std::uint64_t>();
    r.used_plan.balance = jp.at("balance").get<bool>();
    r.used_plan.warm_start = jp.value("warm_start", false);
    r.used_plan.batch_size = jp.value("batch", 128u);
    r.used_plan.learning_rate = jp.value("lr", 0.001);
    r.per_round_selected = j.at("per_round_selected").get<std::vector<index_list>>();
    r.expanded_target = j.at("expanded_target").get<index_list>();
    r.per_class_selected_counts = j.at("per_class_selected_counts").get<std::vector<std::size_t>>();
    for (const auto& d : j.at("model_digests")) r.model_digests.push_back(parse_digest_hex(d.get<std::string>()));
    r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
    return r;
}

}  // namespace duse::expansion

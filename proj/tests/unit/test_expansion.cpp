#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "duse/expansion.hpp"
#include "duse/selftest.hpp"
#include "duse/sigsynth.hpp"

using namespace duse;
using namespace duse::expansion;

namespace {

struct desk {
    dataset ds;
    split_indices splits;
};

// Small synthetic instance: signal_len 16, four classes.
desk make_desk(std::uint32_t per_cell, double target_frac, std::uint64_t seed = 1) {
    sigsynth::gen_spec spec;
    spec.schemes = {sigsynth::modulation::bpsk, sigsynth::modulation::qpsk, sigsynth::modulation::qam16,
                    sigsynth::modulation::gfsk};
    spec.snr_min_db = 10;
    spec.snr_max_db = 14;
    spec.signal_len = 16;
    spec.per_class_per_snr = per_cell;
    spec.seed = seed;
    desk d;
    d.ds = sigsynth::generate_dataset(spec);
    d.splits = make_splits(d.ds, target_frac, 0.2, seed, 0);
    return d;
}

scoring::score_report report_of(std::vector<double> scores, scoring::direction dir) {
    scoring::score_report r;
    r.dir = dir;
    r.scores = std::move(scores);
    r.indices.resize(r.scores.size());
    std::iota(r.indices.begin(), r.indices.end(), 0);
    return r;
}

plan quick_plan(method m, double rate, std::uint32_t rounds = 2) {
    plan p;
    p.method = m;
    p.rate = rate;
    p.rounds = rounds;
    p.epochs_per_round = 3;
    p.probe_epochs = 3;
    p.grand_epochs = 2;
    p.grand_runs = 2;
    p.seed = 5;
    return p;
}

void check_result_invariants(const result& r, const split_indices& s, std::size_t budget) {
    std::set<std::size_t> seen(s.target.begin(), s.target.end());
    std::size_t total = 0;
    const std::set<std::size_t> aux(s.auxiliary.begin(), s.auxiliary.end());
    for (const auto& round : r.per_round_selected) {
        CHECK(std::is_sorted(round.begin(), round.end()));
        for (std::size_t i : round) {
            CHECK(aux.contains(i));
            CHECK(seen.insert(i).second);
        }
        total += round.size();
    }
    CHECK(total == budget);
    CHECK(r.expanded_target.size() == s.target.size() + budget);
    CHECK(std::accumulate(r.per_class_selected_counts.begin(), r.per_class_selected_counts.end(), std::size_t{0}) ==
          budget);
}

}  // namespace

TEST_CASE("budget examples") {
    CHECK(budget_from_rate(0.04, 9900) == 396);
    CHECK(budget_from_rate(1.0, 3160) == 3160);
    CHECK(budget_from_rate(0.07, 3160) == 221);
    CHECK_THROWS_AS(budget_from_rate(0.0001, 100), invalid_input);
    CHECK_THROWS_AS(budget_from_rate(0.0, 100), invalid_input);
    CHECK_THROWS_AS(budget_from_rate(1.5, 100), invalid_input);
}

TEST_CASE("round quotas") {
    CHECK(round_quotas(396, 4) == std::vector<std::size_t>{99, 99, 99, 99});
    CHECK(round_quotas(10, 3) == std::vector<std::size_t>{4, 3, 3});
    CHECK(round_quotas(5, 5) == std::vector<std::size_t>{1, 1, 1, 1, 1});
    CHECK_THROWS_AS(round_quotas(5, 0), invalid_input);
}

TEST_CASE("top-k selection examples") {
    const auto r = report_of({0.9, 0.1, 0.5}, scoring::direction::min);
    const index_list cand{0, 1, 2};
    CHECK(select_topk_uncertain(r, 2, cand) == index_list{1, 2});
    const auto flat = report_of({0.3, 0.3, 0.3, 0.3}, scoring::direction::min);
    const index_list cand4{3, 2, 1, 0};
    CHECK(select_topk_uncertain(flat, 2, cand4) == index_list{0, 1});
    const auto hi = report_of({0.9, 0.1, 0.5}, scoring::direction::max);
    CHECK(select_topk_uncertain(hi, 1, cand) == index_list{0});
    CHECK_THROWS_AS(select_topk_uncertain(r, 4, cand), sizing_error);
    const index_list unknown{7};
    CHECK_THROWS_AS(select_topk_uncertain(r, 1, unknown), invalid_input);
}

TEST_CASE("top-k agrees with the rank-counting oracle") {
    rng gen(9);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + gen.below(64);
        std::vector<double> scores(n);
        for (auto& s : scores) s = gen.below(4) == 0 ? 0.5 : gen.uniform01();
        const auto dir = gen.below(2) ? scoring::direction::min : scoring::direction::max;
        auto r = report_of(scores, dir);
        index_list cand(n);
        std::iota(cand.begin(), cand.end(), 0);
        const std::size_t k = gen.below(n + 1);
        auto expected = oracle::topk_by_rank_counting(scores, r.indices, dir, k);
        std::sort(expected.begin(), expected.end());
        CHECK(select_topk_uncertain(r, k, cand) == expected);
    }
}

TEST_CASE("balanced quotas") {
    const std::vector<std::size_t> even(8, 5);
    std::vector<std::uint16_t> labels;
    for (std::uint16_t c = 0; c < 8; ++c) labels.insert(labels.end(), 10, c);

    auto q = balanced_quotas(8, even, labels);
    CHECK(q.per_class == std::vector<std::size_t>(8, 1));
    CHECK(q.spill == 0);
    CHECK(q.diagnostics.empty());

    q = balanced_quotas(10, even, labels);
    CHECK(q.per_class == std::vector<std::size_t>{2, 2, 1, 1, 1, 1, 1, 1});

    // Levels an uneven target first.
    const std::vector<std::size_t> uneven{5, 3, 5, 5};
    const std::vector<std::uint16_t> l4{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
    q = balanced_quotas(4, uneven, l4);
    // slots: class 1 (3→4), class 1 (4→5), then class 0 (5→6), then class 1 (5→6)
    CHECK(q.per_class == std::vector<std::size_t>{1, 3, 0, 0});

    // Depleted class: class 1 has only one candidate.
    const std::vector<std::uint16_t> depleted{0, 0, 0, 0, 1, 2, 2, 2, 2};
    const std::vector<std::size_t> three(3, 2);
    q = balanced_quotas(6, three, depleted);
    CHECK(q.per_class[1] == 1);
    CHECK(q.spill == 1);
    CHECK(q.per_class[0] + q.per_class[1] + q.per_class[2] + q.spill == 6);
    CHECK(!q.diagnostics.empty());
}

TEST_CASE("select_balanced honours quotas and spill") {
    dataset ds;
    ds.num_classes = 3;
    ds.signal_len = 1;
    const std::vector<std::uint16_t> labels{0, 0, 0, 0, 1, 2, 2, 2, 2};
    for (auto l : labels) ds.records.push_back({l, 0, {0.f, 0.f}});
    const auto r = report_of({0.1, 0.2, 0.3, 0.4, 0.9, 0.5, 0.6, 0.7, 0.8}, scoring::direction::min);
    index_list cand(9);
    std::iota(cand.begin(), cand.end(), 0);
    const std::vector<std::size_t> totals(3, 2);
    const auto q = balanced_quotas(6, totals, labels);
    const auto picked = select_balanced(r, ds, cand, q);
    CHECK(picked.size() == 6);
    // class quotas 2/1/2 (class 1 capped at 1), spill 1 goes to the next-best overall (index 2).
    CHECK(picked == index_list{0, 1, 2, 4, 5, 6});
}

TEST_CASE("duse_expand invariants and determinism") {
    const auto d = make_desk(30, 0.05);
    auto p = quick_plan(method::duse, 0.2, 3);
    const std::size_t budget = budget_from_rate(p.rate, d.splits.auxiliary.size());
    const auto r1 = expand(d.ds, d.splits, p, 11);
    check_result_invariants(r1, d.splits, budget);
    CHECK(r1.per_round_selected.size() == 3);
    CHECK(r1.model_digests.size() == 3);
    const auto q = round_quotas(budget, 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r1.per_round_selected[i].size() == q[i]);
    const auto r2 = expand(d.ds, d.splits, p, 11);
    CHECK(r1.to_json() == r2.to_json());
}

TEST_CASE("one round of duse equals one-shot margin selection") {
    const auto d = make_desk(30, 0.05);
    auto p = quick_plan(method::duse, 0.1, 1);
    const auto a = expand(d.ds, d.splits, p, 3);
    p.method = method::margin;
    const auto b = expand(d.ds, d.splits, p, 3);
    p.method = method::duse_oneshot;
    const auto c = expand(d.ds, d.splits, p, 3);
    CHECK(a.per_round_selected == b.per_round_selected);
    CHECK(b.per_round_selected == c.per_round_selected);
}

TEST_CASE("duse_oneshot forces a single round") {
    const auto d = make_desk(30, 0.05);
    auto p = quick_plan(method::duse_oneshot, 0.1, 4);
    CHECK(p.effective_rounds() == 1);
    CHECK(expand(d.ds, d.splits, p, 3).per_round_selected.size() == 1);
}

TEST_CASE("full budget migrates the whole auxiliary pool") {
    const auto d = make_desk(10, 0.1);
    for (method m : {method::duse, method::random, method::herding}) {
        const auto r = expand(d.ds, d.splits, quick_plan(m, 1.0), 2);
        index_list all = d.splits.target;
        all.insert(all.end(), d.splits.auxiliary.begin(), d.splits.auxiliary.end());
        std::sort(all.begin(), all.end());
        CHECK(r.expanded_target == all);
    }
}

TEST_CASE("replaying recorded round models reproduces every selection") {
    const auto d = make_desk(5, 0.1);  // 60 records
    REQUIRE(d.ds.size() == 60);
    auto p = quick_plan(method::duse, 0.5, 2);
    p.keep_models = true;
    const auto r = duse_expand(d.ds, d.splits, p, 17);
    REQUIRE(r.round_models.size() == 2);
    const auto quotas = round_quotas(budget_from_rate(p.rate, d.splits.auxiliary.size()), 2);

    index_list aux = d.splits.auxiliary;
    for (std::size_t round = 0; round < 2; ++round) {
        const auto fwd = nnet::forward(r.round_models[round], nnet::gather(d.ds, aux));
        std::vector<double> scores;
        for (std::size_t i = 0; i < aux.size(); ++i) {
            const auto logits = fwd.logits_of(i);
            const std::vector<double> z(logits.begin(), logits.end());
            scores.push_back(oracle::margin_by_sort(oracle::softmax_naive(z)));
        }
        auto expected = oracle::topk_by_rank_counting(scores, aux, scoring::direction::min, quotas[round]);
        std::sort(expected.begin(), expected.end());
        CHECK(r.per_round_selected[round] == expected);
        index_list rest;
        std::set_difference(aux.begin(), aux.end(), expected.begin(), expected.end(), std::back_inserter(rest));
        aux = rest;
    }
}

TEST_CASE("baselines respect the budget") {
    const auto d = make_desk(20, 0.05);
    for (method m : {method::margin, method::entropy, method::least_confidence, method::grand, method::herding,
                     method::forgetting, method::random, method::duse_balanced}) {
        auto p = quick_plan(m, 0.15);
        const auto r = expand(d.ds, d.splits, p, 4);
        check_result_invariants(r, d.splits, budget_from_rate(p.rate, d.splits.auxiliary.size()));
        CHECK(r.to_json() == expand(d.ds, d.splits, p, 4).to_json());
    }
}

TEST_CASE("random selection is uniform over the auxiliary pool") {
    const auto d = make_desk(20, 0.05);
    std::vector<std::size_t> hits(d.ds.size(), 0);
    auto p = quick_plan(method::random, 0.25);
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        p.seed = seed;
        const auto r = expand(d.ds, d.splits, p, 0);
        for (std::size_t i : r.per_round_selected[0]) ++hits[i];
    }
    for (std::size_t i : d.splits.auxiliary) CHECK(std::abs(static_cast<double>(hits[i]) - 100.0) < 45.0);
    for (std::size_t i : d.splits.target) CHECK(hits[i] == 0);
}

TEST_CASE("herding honours largest-remainder apportionment") {
    const auto d = make_desk(20, 0.05);
    const auto p = quick_plan(method::herding, 0.13);
    const auto r = expand(d.ds, d.splits, p, 6);
    const auto budget = budget_from_rate(p.rate, d.splits.auxiliary.size());
    const auto aux_counts = class_counts(d.ds, d.splits.auxiliary);
    // Independent apportionment: floor of exact quotas, then the largest remainders (lowest class on ties).
    const std::size_t total = std::accumulate(aux_counts.begin(), aux_counts.end(), std::size_t{0});
    std::vector<std::size_t> expect(aux_counts.size());
    std::vector<std::pair<std::size_t, std::size_t>> rema;  // (remainder numerator, class)
    std::size_t given = 0;
    for (std::size_t c = 0; c < aux_counts.size(); ++c) {
        expect[c] = budget * aux_counts[c] / total;
        given += expect[c];
        rema.push_back({budget * aux_counts[c] % total, c});
    }
    std::stable_sort(rema.begin(), rema.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t i = 0; given < budget; ++i, ++given) ++expect[rema[i].second];
    CHECK(r.per_class_selected_counts == expect);
}

TEST_CASE("balanced variant levels the expanded target") {
    const auto d = make_desk(40, 0.05);
    auto p = quick_plan(method::duse, 0.1, 2);
    p.balance = true;
    const auto r = expand(d.ds, d.splits, p, 8);
    const auto counts = class_counts(d.ds, r.expanded_target);
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
    CHECK(r.diagnostics.empty());
}

TEST_CASE("balanced variant diagnoses depletion") {
    auto d = make_desk(20, 0.05);
    // Keep only two auxiliary samples of class 0.
    index_list aux;
    std::size_t zeros = 0;
    for (std::size_t i : d.splits.auxiliary)
        if (d.ds.records[i].label != 0 || zeros++ < 2) aux.push_back(i);
    d.splits.auxiliary = aux;
    auto p = quick_plan(method::duse_balanced, 0.5, 1);
    const auto r = expand(d.ds, d.splits, p, 8);
    check_result_invariants(r, d.splits, budget_from_rate(p.rate, aux.size()));
    CHECK(!r.diagnostics.empty());
    CHECK(r.per_class_selected_counts[0] == 2);
}

TEST_CASE("plan validation") {
    const auto d = make_desk(10, 0.1);
    auto p = quick_plan(method::duse, 0.01, 4);
    CHECK_THROWS_AS(expand(d.ds, d.splits, p, 1), invalid_input);  // budget smaller than rounds
    p = quick_plan(method::duse, 0.5, 2);
    p.epochs_per_round = 0;
    CHECK_THROWS_AS(expand(d.ds, d.splits, p, 1), invalid_input);
    CHECK_THROWS_AS(duse_expand(d.ds, d.splits, quick_plan(method::random, 0.5), 1), invalid_input);
    CHECK_THROWS_AS(oneshot_expand(d.ds, d.splits, quick_plan(method::duse, 0.5), 1), invalid_input);
    CHECK(parse_method("duse_balanced") == method::duse_balanced);
    CHECK_THROWS_AS(parse_method("glister"), invalid_input);
}

TEST_CASE("result JSON round trip") {
    const auto d = make_desk(20, 0.05);
    const auto r = expand(d.ds, d.splits, quick_plan(method::duse, 0.2, 2), 3);
    const auto path = std::filesystem::temp_directory_path() / "duse_expansion_test.json";
    write_result(r, path);
    const auto back = read_result(path);
    CHECK(back.per_round_selected == r.per_round_selected);
    CHECK(back.expanded_target == r.expanded_target);
    CHECK(back.model_digests == r.model_digests);
    CHECK(back.used_plan.method == method::duse);
    CHECK(back.to_json() == r.to_json());
}

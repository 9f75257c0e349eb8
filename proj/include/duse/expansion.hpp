#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duse/dataio.hpp"
#include "duse/nnet.hpp"
#include "duse/scoring.hpp"

namespace duse::expansion {

enum class method {
    duse,
    duse_balanced,
    duse_oneshot,
    margin,
    entropy,
    least_confidence,
    grand,
    herding,
    forgetting,
    random
};

std::string_view name(method m);
method parse_method(std::string_view text);
bool is_iterative(method m);

struct plan {
    expansion::method method = expansion::method::duse;
    double rate = 0.04;
    std::uint32_t rounds = 4;
    std::uint32_t epochs_per_round = 20;
    std::uint64_t seed = 0;
    bool balance = false;
    /// Continue training the previous round's model instead of re-initializing.
    bool warm_start = false;

    std::uint32_t batch_size = 128;
    double learning_rate = 0.001;
    /// Forgetting probe: epochs of training on target + auxiliary.
    std::uint32_t probe_epochs = 50;
    std::uint32_t grand_runs = 3;
    std::uint32_t grand_epochs = 5;
    /// Keep each round's trained model in the result (for replay checks).
    bool keep_models = false;

    /// Rounds actually executed (1 for every one-shot method).
    std::uint32_t effective_rounds() const;
    bool balanced() const { return balance || method == expansion::method::duse_balanced; }
};

struct result {
    plan used_plan;
    std::vector<index_list> per_round_selected;
    index_list expanded_target;
    std::vector<std::size_t> per_class_selected_counts;
    std::vector<std::uint64_t> model_digests;
    std::vector<std::string> diagnostics;

    std::vector<scoring::score_report> round_reports;  // not serialized
    std::vector<nnet::model_state> round_models;       // only with plan.keep_models

    /// Serialized form; identical results produce identical text.
    std::string to_json() const;
};

/// round(rate * aux_size); rejects a zero budget and rates outside (0, 1].
std::size_t budget_from_rate(double rate, std::size_t aux_size);

/// Splits B over R rounds: floor or ceil of B/R each, earlier rounds larger.
std::vector<std::size_t> round_quotas(std::size_t budget, std::size_t rounds);

/// The k most informative candidates per report.dir; ties go to the lower
/// dataset index. Candidates must all appear in the report. Returns sorted indices.
index_list select_topk_uncertain(const scoring::score_report& report, std::size_t k,
                                 std::span<const std::size_t> candidates);

struct quota_plan {
    std::vector<std::size_t> per_class;  // drawn from each class's own candidates
    std::size_t spill = 0;               // filled from the globally next-best candidates
    std::vector<std::string> diagnostics;
};

/// Per-class quotas that level the expanded target's class totals: each of
/// the k slots goes to the class with the smallest running total (lowest id
/// on ties). Classes without enough candidates keep what they have and the
/// shortfall becomes spill.
quota_plan balanced_quotas(std::size_t k, std::span<const std::size_t> current_class_totals,
                           std::span<const std::uint16_t> candidate_labels);

/// Applies a quota_plan: per-class top picks, then spill from the best of the rest.
index_list select_balanced(const scoring::score_report& report, const dataset& ds,
                           std::span<const std::size_t> candidates, const quota_plan& quotas);

/// Iterative uncertainty-driven expansion (duse, duse_balanced, duse_oneshot).
result duse_expand(const dataset& ds, const split_indices& splits, const plan& p, std::uint64_t model_seed);

/// One-pass selection for the baselines (and duse_oneshot).
result oneshot_expand(const dataset& ds, const split_indices& splits, const plan& p, std::uint64_t model_seed);

/// Dispatches on the plan's method.
result expand(const dataset& ds, const split_indices& splits, const plan& p, std::uint64_t model_seed);

/// Architecture sized for the dataset.
nnet::architecture architecture_for(const dataset& ds);

void write_result(const result& r, const std::filesystem::path& path);
/// Reads back the index sets of a serialized result (plan fields included).
result read_result(const std::filesystem::path& path);

}  // namespace duse::expansion

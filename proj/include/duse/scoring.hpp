#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duse/nnet.hpp"

namespace duse::scoring {

enum class score_method { margin, entropy, least_confidence, grand, forgetting };
/// Which extreme of a score vector marks the most informative sample.
enum class direction { min, max };

std::string_view name(score_method m);
score_method parse_score_method(std::string_view text);
std::string_view name(direction d);
direction direction_of(score_method m);

struct score_report {
    score_method method = score_method::margin;
    direction dir = direction::min;
    index_list indices;          // dataset indices of the scored samples
    std::vector<double> scores;  // aligned with indices
    std::uint64_t model_digest = 0;

    /// Throws if scores are non-finite, misaligned, or out of the method's range.
    void validate(std::size_t num_classes) const;
};

/// Max-shifted softmax in double precision.
std::vector<double> softmax(std::span<const float> logits);

/// p1* - p2*, the gap between the two largest probabilities. Smaller means
/// the model is less certain. Rejects vectors with fewer than two entries.
double margin_uncertainty(std::span<const double> probs);
/// Shannon entropy in nats with 0 log 0 = 0.
double entropy_score(std::span<const double> probs);
/// 1 - max p.
double least_confidence_score(std::span<const double> probs);

/// Margin, entropy or least-confidence scores of `indices` under one model.
/// Forward passes run in parallel; the report is in index order.
score_report uncertainty_scores(const nnet::model_state& model, const dataset& ds, std::span<const std::size_t> indices,
                                score_method method);

struct grand_options {
    std::uint32_t num_runs = 3;
    std::uint32_t short_epochs = 5;
    std::uint64_t base_seed = 0;
    std::uint32_t batch_size = 128;
    double learning_rate = 0.001;
    nnet::architecture arch;
};

/// Mean over runs of the per-sample loss-gradient L2 norm. Run r trains a
/// fresh init_model(base_seed + r) on the target indices for short_epochs
/// with shuffle seed derive_seed(base_seed, {r}).
score_report grand_scores(const dataset& ds, std::span<const std::size_t> target,
                          std::span<const std::size_t> auxiliary, const grand_options& opts);

/// Correct-to-incorrect transitions between consecutive epochs for each
/// sample; never-correct samples get the epoch count. Needs >= 2 epochs.
std::vector<std::uint32_t> forgetting_counts(const nnet::correctness_log& log);

/// Largest-remainder apportionment of `total` proportionally to `weights`;
/// equal remainders favour the lower position.
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const std::size_t> weights);

/// Greedy herding per class: repeatedly add the candidate that brings the
/// running selected mean closest (Euclidean) to the class mean of all
/// candidates. `features` is row-major [n][dim]. Returns positions into the
/// candidate rows, grouped by class ascending, in selection order.
index_list herding_select(std::span<const float> features, std::size_t dim, std::span<const std::uint16_t> labels,
                          std::span<const std::size_t> per_class_budget);

std::string score_report_csv(const score_report& report);
void write_score_report(const score_report& report, const std::filesystem::path& path);

}  // namespace duse::scoring

#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the production kernels; the routines are deliberately naive.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "duse/nnet.hpp"
#include "duse/scoring.hpp"

namespace duse::oracle {

using tensor_set = std::array<std::vector<double>, nnet::num_tensors>;

tensor_set to_double(const nnet::parameters& p);

/// Logits of one sample computed with direct index arithmetic in double.
std::vector<double> reference_logits(const nnet::architecture& arch, const tensor_set& params,
                                     std::span<const float> iq);

/// Mean cross-entropy over the batch, double precision.
double reference_loss(const nnet::architecture& arch, const tensor_set& params, nnet::batch_view batch);

/// Central differences of reference_loss with respect to every parameter. The
/// step shrinks for coordinates whose probes would cross a ReLU or pooling switch.
tensor_set finite_difference_gradients(const nnet::model_state& model, nnet::batch_view batch, double step);

/// |a - n| / max(|a|, |n|, floor), maximised over each tensor.
std::array<double, nnet::num_tensors> max_relative_errors(const nnet::parameters& analytic, const tensor_set& numeric,
                                                          double floor);

// Scoring oracles ------------------------------------------------------------

std::vector<double> softmax_naive(std::span<const double> logits);
double margin_by_sort(std::span<const double> probs);
double entropy_direct(std::span<const double> probs);
double least_confidence_by_sort(std::span<const double> probs);

/// Indices whose count of strictly-better competitors is below k
/// (better = more informative score, or equal score with lower index).
index_list topk_by_rank_counting(std::span<const double> scores, std::span<const std::size_t> indices,
                                 scoring::direction dir, std::size_t k);

/// Exhaustive herding step: the remaining candidate position whose addition
/// puts the selected mean closest to the mean of all candidates.
std::size_t herding_step_argmin(std::span<const float> features, std::size_t dim,
                                std::span<const std::size_t> class_members, std::span<const std::size_t> selected);

// Random instances -----------------------------------------------------------

nnet::architecture random_small_architecture(rng& gen);
std::vector<signal_record> random_records(const nnet::architecture& arch, std::size_t count, rng& gen);

// Suites ---------------------------------------------------------------------

struct suite_result {
    bool passed = true;
    std::size_t cases = 0;
    double worst = 0.0;
};

/// Analytic vs finite-difference gradients on `configs` random small models.
suite_result gradient_suite(std::size_t configs, std::uint64_t seed, double tolerance, std::ostream* log = nullptr);
/// Softmax scores and top-k selection vs the oracles on random instances.
suite_result scoring_suite(std::size_t instances, std::uint64_t seed, std::ostream* log = nullptr);
/// Each herding step vs exhaustive argmin.
suite_result herding_suite(std::size_t trials, std::uint64_t seed, std::ostream* log = nullptr);

}  // namespace duse::oracle

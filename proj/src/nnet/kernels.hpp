#pragma once

// Single-sample forward/backward passes shared by the serial and OpenMP
// batch drivers.

#include <cstdint>
#include <span>
#include <vector>

#include "duse/nnet.hpp"

namespace duse::nnet::detail {

struct workspace {
    std::vector<float> act1;     // [F1][L]   post-ReLU conv1
    std::vector<float> pool1;    // [F1][L/2]
    std::vector<std::uint8_t> arg1;
    std::vector<float> act2;     // [F2][L/2] post-ReLU conv2
    std::vector<float> pool2;    // [F2][L/4] == flattened fc1 input
    std::vector<std::uint8_t> arg2;
    std::vector<float> hidden;   // [H]       post-ReLU fc1
    std::vector<float> logits;   // [C]

    // backward scratch
    std::vector<float> d_logits, d_hidden, d_pool2, d_act2, d_pool1, d_act1;

    explicit workspace(const architecture& arch);
};

void forward_sample(const model_state& model, std::span<const float> input, workspace& ws);

/// Cross-entropy of ws.logits against `label`; fills ws.d_logits with
/// (softmax - onehot) * scale. Returns the unscaled loss.
double softmax_cross_entropy(workspace& ws, std::uint32_t label, float scale);

/// Accumulates (+=) the gradient implied by ws.d_logits into `grad`.
/// Requires forward_sample on the same input first.
void backward_sample(const model_state& model, std::span<const float> input, workspace& ws, parameters& grad);

void check_batch(const model_state& model, batch_view batch);

}  // namespace duse::nnet::detail

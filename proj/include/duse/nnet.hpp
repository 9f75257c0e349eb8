#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "duse/dataio.hpp"

namespace duse::nnet {

/// Layer sizes of the reference 1-D CNN:
///   conv(k1, same) -> ReLU -> maxpool/2 -> conv(k2, same) -> ReLU -> maxpool/2
///   -> dense(hidden) -> ReLU -> dense(num_classes)
struct architecture {
    std::uint32_t signal_len = 128;
    std::uint32_t conv1_filters = 16;
    std::uint32_t conv1_kernel = 7;
    std::uint32_t conv2_filters = 32;
    std::uint32_t conv2_kernel = 5;
    std::uint32_t hidden = 64;
    std::uint32_t num_classes = 8;

    void validate() const;
    std::uint32_t in_channels() const noexcept { return 2; }
    std::uint32_t flat_dim() const noexcept { return conv2_filters * (signal_len / 4); }
    std::size_t input_size() const noexcept { return 2 * static_cast<std::size_t>(signal_len); }

    bool operator==(const architecture&) const = default;
};

inline constexpr std::size_t num_tensors = 8;
inline constexpr std::array<std::string_view, num_tensors> tensor_names = {
    "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"};

/// Every trainable tensor. Also used for gradients and optimizer moments.
/// Layouts: conv1_w [filter][channel][tap], conv2_w [filter][in][tap],
/// fc1_w [hidden][flat], fc2_w [class][hidden]; flat index = channel * (L/4) + t.
struct parameters {
    std::vector<float> conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b;

    static parameters zeros(const architecture& arch);

    std::array<std::span<float>, num_tensors> tensors();
    std::array<std::span<const float>, num_tensors> tensors() const;
    std::size_t count() const;
    void fill(float value);
    void add(const parameters& other);
    void scale(float factor);
    double squared_norm() const;

    bool operator==(const parameters&) const = default;
};

struct model_state {
    architecture arch;
    parameters params;
    std::uint64_t init_seed = 0;

    bool operator==(const model_state&) const = default;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias,
/// drawn tensor by tensor from one rng(seed) stream.
model_state init_model(std::uint64_t seed, const architecture& arch);
model_state init_model(std::uint64_t seed, std::uint32_t num_classes);

using batch_view = std::span<const signal_record* const>;

struct forward_output {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::vector<float> logits;    // [sample][class]
    std::vector<float> features;  // [sample][hidden], post-ReLU fc1 activations

    std::span<const float> logits_of(std::size_t i) const { return {logits.data() + i * num_classes, num_classes}; }
    std::span<const float> features_of(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }
};

struct loss_gradients {
    double loss = 0.0;  // mean cross-entropy
    parameters grads;   // gradient of the mean loss
};

// OpenMP kernels. Per-sample work is independent; gradient reductions use
// fixed chunks of `gradient_chunk` samples summed in chunk order, so the
// result does not depend on the thread count.
inline constexpr std::size_t gradient_chunk = 16;

forward_output forward(const model_state& model, batch_view batch);
loss_gradients loss_and_gradients(const model_state& model, batch_view batch);
std::vector<double> per_sample_gradient_norms(const model_state& model, batch_view batch);

// Serial reference kernels kept for testing and benchmarking.
namespace serial {
forward_output forward(const model_state& model, batch_view batch);
loss_gradients loss_and_gradients(const model_state& model, batch_view batch);
std::vector<double> per_sample_gradient_norms(const model_state& model, batch_view batch);
}  // namespace serial

double per_sample_gradient_norm(const model_state& model, const signal_record& sample);

/// Index of the largest logit; the first maximum wins.
std::uint32_t predict_label(std::span<const float> logits);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

inline constexpr double adam_beta1 = 0.9;
inline constexpr double adam_beta2 = 0.999;
inline constexpr double adam_epsilon = 1e-8;

struct adam_state {
    parameters m;
    parameters v;
    std::uint64_t step = 0;

    static adam_state for_model(const model_state& model);
};

/// One bias-corrected Adam update; increments state.step.
void adam_step(model_state& model, const parameters& grads, adam_state& state, double learning_rate);

struct train_config {
    std::uint32_t epochs = 20;
    std::uint32_t batch_size = 128;
    double learning_rate = 0.001;
    std::uint64_t shuffle_seed = 0;
    bool record_correctness = false;
};

/// Per-epoch training-set correctness, [epoch][sample] in input order.
struct correctness_log {
    std::size_t epochs = 0;
    std::size_t samples = 0;
    std::vector<std::uint8_t> correct;

    bool at(std::size_t epoch, std::size_t sample) const { return correct[epoch * samples + sample] != 0; }
};

struct train_result {
    model_state model;
    std::optional<correctness_log> log;
};

/// Adam over shuffled minibatches (the last batch may be partial). The
/// permutation for every epoch comes from one rng(shuffle_seed) stream.
train_result train(model_state model, batch_view records, const train_config& config);

std::vector<const signal_record*> gather(const dataset& ds, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Checkpoints ("AMRM" v1): magic, version u32, 7 architecture u32 fields in
// declaration order, init_seed u64, then the tensors as float32 LE in
// tensor_names order.
// ---------------------------------------------------------------------------

std::vector<std::byte> encode_checkpoint(const model_state& model);
model_state decode_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const model_state& model, const std::filesystem::path& path);
model_state load_checkpoint(const std::filesystem::path& path);
std::uint64_t model_digest(const model_state& model);

}  // namespace duse::nnet

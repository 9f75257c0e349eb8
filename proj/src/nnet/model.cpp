#include <cmath>
#include <string>

#include "duse/nnet.hpp"

namespace duse::nnet {

void architecture::validate() const {
    if (signal_len == 0 || signal_len % 4 != 0) throw invalid_input("architecture: signal_len must be a positive multiple of 4");
    if (conv1_filters == 0 || conv2_filters == 0 || hidden == 0)
        throw invalid_input("architecture: layer widths must be positive");
    if (conv1_kernel % 2 == 0 || conv2_kernel % 2 == 0)
        throw invalid_input("architecture: 'same' convolutions need odd kernel sizes");
    if (num_classes < 2) throw invalid_input("architecture: at least two classes required");
}

parameters parameters::zeros(const architecture& a) {
    parameters p;
    p.conv1_w.assign(static_cast<std::size_t>(a.conv1_filters) * a.in_channels() * a.conv1_kernel, 0.0f);
    p.conv1_b.assign(a.conv1_filters, 0.0f);
    p.conv2_w.assign(static_cast<std::size_t>(a.conv2_filters) * a.conv1_filters * a.conv2_kernel, 0.0f);
    p.conv2_b.assign(a.conv2_filters, 0.0f);
    p.fc1_w.assign(static_cast<std::size_t>(a.hidden) * a.flat_dim(), 0.0f);
    p.fc1_b.assign(a.hidden, 0.0f);
    p.fc2_w.assign(static_cast<std::size_t>(a.num_classes) * a.hidden, 0.0f);
    p.fc2_b.assign(a.num_classes, 0.0f);
    return p;
}

std::array<std::span<float>, num_tensors> parameters::tensors() {
    return {conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b};
}

std::array<std::span<const float>, num_tensors> parameters::tensors() const {
    return {conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b};
}

std::size_t parameters::count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
}

void parameters::fill(float value) {
    for (auto t : tensors()) std::fill(t.begin(), t.end(), value);
}

void parameters::add(const parameters& other) {
    auto dst = tensors();
    auto src = other.tensors();
    for (std::size_t k = 0; k < num_tensors; ++k)
        for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i];
}

void parameters::scale(float factor) {
    for (auto t : tensors())
        for (float& v : t) v *= factor;
}

double parameters::squared_norm() const {
    double s = 0.0;
    for (auto t : tensors())
        for (float v : t) s += static_cast<double>(v) * v;
    return s;
}

model_state init_model(std::uint64_t seed, const architecture& arch) {
    arch.validate();
    model_state m;
    m.arch = arch;
    m.init_seed = seed;
    m.params = parameters::zeros(arch);

    const double fan_in[num_tensors] = {
        double(arch.in_channels()) * arch.conv1_kernel, double(arch.in_channels()) * arch.conv1_kernel,
        double(arch.conv1_filters) * arch.conv2_kernel, double(arch.conv1_filters) * arch.conv2_kernel,
        double(arch.flat_dim()),                        double(arch.flat_dim()),
        double(arch.hidden),                            double(arch.hidden)};
    rng gen(seed);
    auto tensors = m.params.tensors();
    for (std::size_t k = 0; k < num_tensors; ++k) {
        const double bound = 1.0 / std::sqrt(fan_in[k]);
        for (float& v : tensors[k]) v = static_cast<float>((2.0 * gen.uniform01() - 1.0) * bound);
    }
    return m;
}

model_state init_model(std::uint64_t seed, std::uint32_t num_classes) {
    architecture arch;
    arch.num_classes = num_classes;
    return init_model(seed, arch);
}

std::uint32_t predict_label(std::span<const float> logits) {
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[best]) best = c;
    return best;
}

std::vector<const signal_record*> gather(const dataset& ds, std::span<const std::size_t> indices) {
    std::vector<const signal_record*> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= ds.records.size()) throw invalid_input("gather: index " + std::to_string(i) + " out of range");
        out.push_back(&ds.records[i]);
    }
    return out;
}

adam_state adam_state::for_model(const model_state& model) {
    return {parameters::zeros(model.arch), parameters::zeros(model.arch), 0};
}

void adam_step(model_state& model, const parameters& grads, adam_state& state, double learning_rate) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const auto b1 = static_cast<float>(adam_beta1);
    const auto b2 = static_cast<float>(adam_beta2);
    const auto correction1 = static_cast<float>(1.0 - std::pow(adam_beta1, t));
    const auto correction2 = static_cast<float>(1.0 - std::pow(adam_beta2, t));
    const auto lr = static_cast<float>(learning_rate);
    const auto eps = static_cast<float>(adam_epsilon);

    auto theta = model.params.tensors();
    auto g = grads.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    for (std::size_t k = 0; k < num_tensors; ++k) {
        for (std::size_t i = 0; i < theta[k].size(); ++i) {
            m[k][i] = b1 * m[k][i] + (1.0f - b1) * g[k][i];
            v[k][i] = b2 * v[k][i] + (1.0f - b2) * g[k][i] * g[k][i];
            const float m_hat = m[k][i] / correction1;
            const float v_hat = v[k][i] / correction2;
            theta[k][i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

}  // namespace duse::nnet

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace duse::nnet::detail {

namespace {

// out[f][t] = b[f] + sum_c sum_k w[f][c][k] * in[c][t + k - pad], zero padded.
void conv_same(std::span<const float> in, std::size_t in_ch, std::size_t len, std::span<const float> w,
               std::span<const float> b, std::size_t out_ch, std::size_t kernel, std::span<float> out) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto n = static_cast<std::ptrdiff_t>(len);
    for (std::size_t f = 0; f < out_ch; ++f) {
        float* o = out.data() + f * len;
        std::fill(o, o + len, b[f]);
        for (std::size_t c = 0; c < in_ch; ++c) {
            const float* x = in.data() + c * len;
            const float* wk = w.data() + (f * in_ch + c) * kernel;
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
                const float wv = wk[k];
                for (std::ptrdiff_t t = lo; t < hi; ++t) o[t] += wv * x[t + shift];
            }
        }
    }
}

// Gradients of conv_same given d_out; d_in is optional (empty span skips it).
void conv_same_backward(std::span<const float> in, std::size_t in_ch, std::size_t len, std::span<const float> w,
                        std::size_t out_ch, std::size_t kernel, std::span<const float> d_out, std::span<float> d_w,
                        std::span<float> d_b, std::span<float> d_in) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto n = static_cast<std::ptrdiff_t>(len);
    if (!d_in.empty()) std::fill(d_in.begin(), d_in.end(), 0.0f);
    for (std::size_t f = 0; f < out_ch; ++f) {
        const float* g = d_out.data() + f * len;
        float bias_sum = 0.0f;
        for (std::size_t t = 0; t < len; ++t) bias_sum += g[t];
        d_b[f] += bias_sum;
        for (std::size_t c = 0; c < in_ch; ++c) {
            const float* x = in.data() + c * len;
            const std::size_t wbase = (f * in_ch + c) * kernel;
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
                float acc = 0.0f;
                for (std::ptrdiff_t t = lo; t < hi; ++t) acc += g[t] * x[t + shift];
                d_w[wbase + k] += acc;
                if (!d_in.empty()) {
                    float* dx = d_in.data() + c * len;
                    const float wv = w[wbase + k];
                    for (std::ptrdiff_t t = lo; t < hi; ++t) dx[t + shift] += wv * g[t];
                }
            }
        }
    }
}

void relu_inplace(std::span<float> v) {
    for (float& x : v) x = x > 0.0f ? x : 0.0f;
}

// Stride-2 window-2 max pool; the first maximal element wins ties.
void maxpool2(std::span<const float> in, std::size_t channels, std::size_t len, std::span<float> out,
              std::span<std::uint8_t> arg) {
    const std::size_t half = len / 2;
    for (std::size_t c = 0; c < channels; ++c) {
        const float* x = in.data() + c * len;
        for (std::size_t t = 0; t < half; ++t) {
            const bool second = x[2 * t + 1] > x[2 * t];
            out[c * half + t] = second ? x[2 * t + 1] : x[2 * t];
            arg[c * half + t] = second ? 1 : 0;
        }
    }
}

// Routes pooled gradients back to the winning positions and applies the
// ReLU mask of the pre-pool activations.
void maxpool2_relu_backward(std::span<const float> d_out, std::span<const std::uint8_t> arg,
                            std::span<const float> act, std::size_t channels, std::size_t len, std::span<float> d_in) {
    std::fill(d_in.begin(), d_in.end(), 0.0f);
    const std::size_t half = len / 2;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t t = 0; t < half; ++t) {
            const std::size_t pos = c * len + 2 * t + arg[c * half + t];
            if (act[pos] > 0.0f) d_in[pos] = d_out[c * half + t];
        }
}

}  // namespace

workspace::workspace(const architecture& a) {
    const std::size_t L = a.signal_len;
    act1.resize(a.conv1_filters * L);
    pool1.resize(a.conv1_filters * L / 2);
    arg1.resize(pool1.size());
    act2.resize(a.conv2_filters * L / 2);
    pool2.resize(a.conv2_filters * L / 4);
    arg2.resize(pool2.size());
    hidden.resize(a.hidden);
    logits.resize(a.num_classes);
    d_logits.resize(a.num_classes);
    d_hidden.resize(a.hidden);
    d_pool2.resize(pool2.size());
    d_act2.resize(act2.size());
    d_pool1.resize(pool1.size());
    d_act1.resize(act1.size());
}

void check_batch(const model_state& model, batch_view batch) {
    const std::size_t expected = model.arch.input_size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i] == nullptr) throw invalid_input("batch sample " + std::to_string(i) + " is null");
        if (batch[i]->iq.size() != expected)
            throw invalid_input("batch sample " + std::to_string(i) + " has " + std::to_string(batch[i]->iq.size()) +
                                " values, model expects [2 x " + std::to_string(model.arch.signal_len) + "]");
        if (batch[i]->label >= model.arch.num_classes)
            throw invalid_input("batch sample " + std::to_string(i) + " label " + std::to_string(batch[i]->label) +
                                " >= num_classes");
    }
}

void forward_sample(const model_state& model, std::span<const float> input, workspace& ws) {
    const auto& a = model.arch;
    const auto& p = model.params;
    const std::size_t L = a.signal_len;

    conv_same(input, 2, L, p.conv1_w, p.conv1_b, a.conv1_filters, a.conv1_kernel, ws.act1);
    relu_inplace(ws.act1);
    maxpool2(ws.act1, a.conv1_filters, L, ws.pool1, ws.arg1);

    conv_same(ws.pool1, a.conv1_filters, L / 2, p.conv2_w, p.conv2_b, a.conv2_filters, a.conv2_kernel, ws.act2);
    relu_inplace(ws.act2);
    maxpool2(ws.act2, a.conv2_filters, L / 2, ws.pool2, ws.arg2);

    const std::size_t flat = a.flat_dim();
    for (std::size_t j = 0; j < a.hidden; ++j) {
        const float* w = p.fc1_w.data() + j * flat;
        float acc = 0.0f;
        for (std::size_t d = 0; d < flat; ++d) acc += w[d] * ws.pool2[d];
        acc += p.fc1_b[j];
        ws.hidden[j] = acc > 0.0f ? acc : 0.0f;
    }
    for (std::size_t c = 0; c < a.num_classes; ++c) {
        const float* w = p.fc2_w.data() + c * a.hidden;
        float acc = 0.0f;
        for (std::size_t j = 0; j < a.hidden; ++j) acc += w[j] * ws.hidden[j];
        ws.logits[c] = acc + p.fc2_b[c];
    }
}

double softmax_cross_entropy(workspace& ws, std::uint32_t label, float scale) {
    const std::size_t C = ws.logits.size();
    double peak = ws.logits[0];
    for (std::size_t c = 1; c < C; ++c) peak = std::max<double>(peak, ws.logits[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(ws.logits[c]) - peak);
    const double log_denom = std::log(denom);
    for (std::size_t c = 0; c < C; ++c) {
        const double prob = std::exp(static_cast<double>(ws.logits[c]) - peak - log_denom);
        ws.d_logits[c] = static_cast<float>((prob - (c == label ? 1.0 : 0.0)) * scale);
    }
    return -(static_cast<double>(ws.logits[label]) - peak - log_denom);
}

void backward_sample(const model_state& model, std::span<const float> input, workspace& ws, parameters& grad) {
    const auto& a = model.arch;
    const auto& p = model.params;
    const std::size_t L = a.signal_len;
    const std::size_t flat = a.flat_dim();

    // fc2
    std::fill(ws.d_hidden.begin(), ws.d_hidden.end(), 0.0f);
    for (std::size_t c = 0; c < a.num_classes; ++c) {
        const float g = ws.d_logits[c];
        grad.fc2_b[c] += g;
        float* gw = grad.fc2_w.data() + c * a.hidden;
        const float* w = p.fc2_w.data() + c * a.hidden;
        for (std::size_t j = 0; j < a.hidden; ++j) {
            gw[j] += g * ws.hidden[j];
            ws.d_hidden[j] += w[j] * g;
        }
    }
    // fc1 (ReLU mask folded in)
    std::fill(ws.d_pool2.begin(), ws.d_pool2.end(), 0.0f);
    for (std::size_t j = 0; j < a.hidden; ++j) {
        if (!(ws.hidden[j] > 0.0f)) continue;
        const float g = ws.d_hidden[j];
        grad.fc1_b[j] += g;
        float* gw = grad.fc1_w.data() + j * flat;
        const float* w = p.fc1_w.data() + j * flat;
        for (std::size_t d = 0; d < flat; ++d) {
            gw[d] += g * ws.pool2[d];
            ws.d_pool2[d] += w[d] * g;
        }
    }
    maxpool2_relu_backward(ws.d_pool2, ws.arg2, ws.act2, a.conv2_filters, L / 2, ws.d_act2);
    conv_same_backward(ws.pool1, a.conv1_filters, L / 2, p.conv2_w, a.conv2_filters, a.conv2_kernel, ws.d_act2,
                       grad.conv2_w, grad.conv2_b, ws.d_pool1);
    maxpool2_relu_backward(ws.d_pool1, ws.arg1, ws.act1, a.conv1_filters, L, ws.d_act1);
    conv_same_backward(input, 2, L, p.conv1_w, a.conv1_filters, a.conv1_kernel, ws.d_act1, grad.conv1_w, grad.conv1_b,
                       {});
}

}  // namespace duse::nnet::detail

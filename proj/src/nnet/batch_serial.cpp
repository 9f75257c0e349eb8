// Straightforward single-threaded batch drivers. The OpenMP versions in
// batch_omp.cpp are checked against these.

#include <cmath>

#include "duse/nnet.hpp"
#include "kernels.hpp"

namespace duse::nnet::serial {

forward_output forward(const model_state& model, batch_view batch) {
    detail::check_batch(model, batch);
    forward_output out;
    out.num_classes = model.arch.num_classes;
    out.feature_dim = model.arch.hidden;
    out.logits.resize(batch.size() * out.num_classes);
    out.features.resize(batch.size() * out.feature_dim);
    detail::workspace ws(model.arch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        detail::forward_sample(model, batch[i]->iq, ws);
        std::copy(ws.logits.begin(), ws.logits.end(), out.logits.begin() + static_cast<std::ptrdiff_t>(i * out.num_classes));
        std::copy(ws.hidden.begin(), ws.hidden.end(), out.features.begin() + static_cast<std::ptrdiff_t>(i * out.feature_dim));
    }
    return out;
}

loss_gradients loss_and_gradients(const model_state& model, batch_view batch) {
    detail::check_batch(model, batch);
    if (batch.empty()) throw invalid_input("loss_and_gradients: empty batch");
    loss_gradients out{0.0, parameters::zeros(model.arch)};
    detail::workspace ws(model.arch);
    const float scale = 1.0f / static_cast<float>(batch.size());
    for (const signal_record* rec : batch) {
        detail::forward_sample(model, rec->iq, ws);
        out.loss += detail::softmax_cross_entropy(ws, rec->label, scale);
        detail::backward_sample(model, rec->iq, ws, out.grads);
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

std::vector<double> per_sample_gradient_norms(const model_state& model, batch_view batch) {
    detail::check_batch(model, batch);
    std::vector<double> norms(batch.size());
    detail::workspace ws(model.arch);
    parameters grad = parameters::zeros(model.arch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        grad.fill(0.0f);
        detail::forward_sample(model, batch[i]->iq, ws);
        detail::softmax_cross_entropy(ws, batch[i]->label, 1.0f);
        detail::backward_sample(model, batch[i]->iq, ws, grad);
        norms[i] = std::sqrt(grad.squared_norm());
    }
    return norms;
}

}  // namespace duse::nnet::serial

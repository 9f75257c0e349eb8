#include <cmath>

#include "duse/nnet.hpp"
#include "kernels.hpp"

namespace duse::nnet {

forward_output forward(const model_state& model, batch_view batch) {
    detail::check_batch(model, batch);
    forward_output out;
    out.num_classes = model.arch.num_classes;
    out.feature_dim = model.arch.hidden;
    out.logits.resize(batch.size() * out.num_classes);
    out.features.resize(batch.size() * out.feature_dim);
    const auto n = static_cast<std::int64_t>(batch.size());

#pragma omp parallel
    {
        detail::workspace ws(model.arch);
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            detail::forward_sample(model, batch[k]->iq, ws);
            std::copy(ws.logits.begin(), ws.logits.end(), out.logits.begin() + static_cast<std::ptrdiff_t>(k * out.num_classes));
            std::copy(ws.hidden.begin(), ws.hidden.end(), out.features.begin() + static_cast<std::ptrdiff_t>(k * out.feature_dim));
        }
    }
    return out;
}

loss_gradients loss_and_gradients(const model_state& model, batch_view batch) {
    detail::check_batch(model, batch);
    if (batch.empty()) throw invalid_input("loss_and_gradients: empty batch");
    const std::size_t chunks = (batch.size() + gradient_chunk - 1) / gradient_chunk;
    std::vector<parameters> partial(chunks);
    std::vector<double> partial_loss(chunks, 0.0);
    const float scale = 1.0f / static_cast<float>(batch.size());

#pragma omp parallel
    {
        detail::workspace ws(model.arch);
#pragma omp for schedule(static)
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
            const auto chunk = static_cast<std::size_t>(c);
            parameters grad = parameters::zeros(model.arch);
            double loss = 0.0;
            const std::size_t end = std::min(batch.size(), (chunk + 1) * gradient_chunk);
            for (std::size_t i = chunk * gradient_chunk; i < end; ++i) {
                detail::forward_sample(model, batch[i]->iq, ws);
                loss += detail::softmax_cross_entropy(ws, batch[i]->label, scale);
                detail::backward_sample(model, batch[i]->iq, ws, grad);
            }
            partial[chunk] = std::move(grad);
            partial_loss[chunk] = loss;
        }
    }

    loss_gradients out{0.0, std::move(partial[0])};
    out.loss = partial_loss[0];
    for (std::size_t c = 1; c < chunks; ++c) {
        out.grads.add(partial[c]);
        out.loss += partial_loss[c];
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

std::vector<double> per_sample_gradient_norms(const model_state& model, batch_view batch) {
    detail::check_batch(model, batch);
    std::vector<double> norms(batch.size());
    const auto n = static_cast<std::int64_t>(batch.size());

#pragma omp parallel
    {
        detail::workspace ws(model.arch);
        parameters grad = parameters::zeros(model.arch);
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            grad.fill(0.0f);
            detail::forward_sample(model, batch[k]->iq, ws);
            detail::softmax_cross_entropy(ws, batch[k]->label, 1.0f);
            detail::backward_sample(model, batch[k]->iq, ws, grad);
            norms[k] = std::sqrt(grad.squared_norm());
        }
    }
    return norms;
}

double per_sample_gradient_norm(const model_state& model, const signal_record& sample) {
    const signal_record* one[] = {&sample};
    return serial::per_sample_gradient_norms(model, one)[0];
}

}  // namespace duse::nnet

#include <numeric>

#include "duse/nnet.hpp"
#include "kernels.hpp"

namespace duse::nnet {

train_result train(model_state model, batch_view records, const train_config& config) {
    if (records.empty()) throw invalid_input("train: empty training set");
    if (config.batch_size == 0) throw invalid_input("train: batch_size must be positive");
    if (!(config.learning_rate > 0.0)) throw invalid_input("train: learning_rate must be positive");
    detail::check_batch(model, records);

    train_result result;
    if (config.record_correctness) {
        result.log.emplace();
        result.log->epochs = config.epochs;
        result.log->samples = records.size();
        result.log->correct.assign(config.epochs * records.size(), 0);
    }

    adam_state opt = adam_state::for_model(model);
    rng gen(config.shuffle_seed);
    std::vector<std::size_t> order(records.size());
    std::vector<const signal_record*> batch;
    batch.reserve(config.batch_size);

    for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, gen);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t k = start; k < end; ++k) batch.push_back(records[order[k]]);
            const auto lg = loss_and_gradients(model, batch);
            adam_step(model, lg.grads, opt, config.learning_rate);
        }
        if (result.log) {
            const auto fwd = forward(model, records);
            for (std::size_t i = 0; i < records.size(); ++i)
                result.log->correct[epoch * records.size() + i] = predict_label(fwd.logits_of(i)) == records[i]->label;
        }
    }
    result.model = std::move(model);
    return result;
}

}  // namespace duse::nnet

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "duse/harness.hpp"
#include "json.hpp"

namespace duse::harness {

accuracy test_accuracy(const nnet::model_state& model, const dataset& ds, std::span<const std::size_t> test) {
    if (test.empty()) throw invalid_input("test_accuracy: empty test set");
    const auto batch = nnet::gather(ds, test);
    const auto fwd = nnet::forward(model, batch);
    std::vector<std::size_t> hits(ds.num_classes, 0), totals(ds.num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto label = batch[i]->label;
        ++totals[label];
        if (nnet::predict_label(fwd.logits_of(i)) == label) {
            ++hits[label];
            ++correct;
        }
    }
    accuracy acc;
    acc.overall = static_cast<double>(correct) / static_cast<double>(batch.size());
    acc.per_class.resize(ds.num_classes, 0.0);
    for (std::size_t c = 0; c < ds.num_classes; ++c)
        if (totals[c] > 0) acc.per_class[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    return acc;
}

std::pair<double, double> mean_and_std(std::span<const double> values) {
    if (values.empty()) return {0.0, 0.0};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

eval_report evaluate(const dataset& ds, std::span<const std::size_t> train, std::span<const std::size_t> test,
                     const eval_options& opts) {
    if (test.empty()) throw invalid_input("evaluate: empty test set");
    if (train.empty()) throw invalid_input("evaluate: empty training set");
    if (opts.seeds == 0) throw invalid_input("evaluate: need at least one seed");
    {
        index_list a(train.begin(), train.end()), b(test.begin(), test.end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        index_list shared;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
        if (!shared.empty())
            throw invalid_input("evaluate: train and test share index " + std::to_string(shared.front()));
    }

    const auto start = std::chrono::steady_clock::now();
    auto arch = expansion::architecture_for(ds);
    const auto train_set = nnet::gather(ds, train);

    eval_report report;
    report.per_class_test_accuracy.assign(ds.num_classes, 0.0);
    for (std::uint32_t s = 0; s < opts.seeds; ++s) {
        nnet::train_config cfg;
        cfg.epochs = opts.epochs;
        cfg.batch_size = opts.batch_size;
        cfg.learning_rate = opts.learning_rate;
        cfg.shuffle_seed = derive_seed(opts.base_seed, {s, 1});
        auto model = nnet::train(nnet::init_model(derive_seed(opts.base_seed, {s, 0}), arch), train_set, cfg).model;
        const auto acc = test_accuracy(model, ds, test);
        report.per_seed_accuracy.push_back(acc.overall);
        for (std::size_t c = 0; c < ds.num_classes; ++c) report.per_class_test_accuracy[c] += acc.per_class[c];
        if (s == 0) report.first_model = std::move(model);
    }
    for (double& a : report.per_class_test_accuracy) a /= opts.seeds;
    std::tie(report.mean_accuracy, report.std_accuracy) = mean_and_std(report.per_seed_accuracy);
    report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::vector<std::size_t> class_histogram(const dataset& ds, std::span<const std::size_t> indices) {
    return class_counts(ds, indices);
}

void dump_features(const nnet::model_state& model, const dataset& ds, std::span<const std::size_t> indices,
                   const std::filesystem::path& path) {
    index_list ordered(indices.begin(), indices.end());
    std::sort(ordered.begin(), ordered.end());
    const auto fwd = nnet::forward(model, nnet::gather(ds, ordered));
    std::string out = "index,label";
    for (std::size_t d = 0; d < fwd.feature_dim; ++d) out += ",f" + std::to_string(d);
    out += '\n';
    char buf[32];
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        out += std::to_string(ordered[i]) + "," + std::to_string(ds.records[ordered[i]].label);
        for (float v : fwd.features_of(i)) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
            out += buf;
        }
        out += '\n';
    }
    try {
        write_file_atomic(path, out);
    } catch (const std::exception& e) {
        throw std::runtime_error("dump_features: " + path.string() + ": " + e.what());
    }
}

std::string eval_report::to_json(bool with_timing) const {
    nlohmann::ordered_json j;
    j["experiment_id"] = experiment_id;
    j["dataset_digest"] = digest_hex(dataset_digest);
    j["method"] = method;
    j["rate"] = rate;
    j["rounds"] = rounds;
    j["per_seed_accuracy"] = per_seed_accuracy;
    j["mean_accuracy"] = mean_accuracy;
    j["std_accuracy"] = std_accuracy;
    j["per_class_test_accuracy"] = per_class_test_accuracy;
    if (with_timing) j["wall_time_seconds"] = wall_time_seconds;
    return j.dump(2) + "\n";
}

eval_report eval_report::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    eval_report r;
    r.experiment_id = j.at("experiment_id").get<std::string>();
    r.dataset_digest = parse_digest_hex(j.at("dataset_digest").get<std::string>());
    r.method = j.at("method").get<std::string>();
    r.rate = j.at("rate").get<double>();
    r.rounds = j.at("rounds").get<std::uint32_t>();
    r.per_seed_accuracy = j.at("per_seed_accuracy").get<std::vector<double>>();
    r.mean_accuracy = j.at("mean_accuracy").get<double>();
    r.std_accuracy = j.at("std_accuracy").get<double>();
    r.per_class_test_accuracy = j.at("per_class_test_accuracy").get<std::vector<double>>();
    r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    return r;
}

}  // namespace duse::harness

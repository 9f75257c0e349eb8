#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duse/dataio.hpp"
#include "duse/expansion.hpp"
#include "duse/nnet.hpp"
#include "duse/sigsynth.hpp"

namespace duse::harness {

struct eval_options {
    std::uint32_t epochs = 50;
    std::uint32_t seeds = 3;
    double learning_rate = 0.001;
    std::uint32_t batch_size = 128;
    std::uint64_t base_seed = 0;
};

struct eval_report {
    std::string experiment_id;
    std::uint64_t dataset_digest = 0;
    std::string method;
    double rate = 0.0;
    std::uint32_t rounds = 0;
    std::vector<double> per_seed_accuracy;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // sample standard deviation (n - 1)
    std::vector<double> per_class_test_accuracy;
    double wall_time_seconds = 0.0;

    std::optional<nnet::model_state> first_model;  // seed-0 model, not serialized

    /// Timing is left out unless asked for, so reruns serialize identically.
    std::string to_json(bool with_timing = false) const;
    static eval_report from_json(const std::string& text);
};

struct accuracy {
    double overall = 0.0;
    std::vector<double> per_class;  // 0 for classes absent from the test set
};

accuracy test_accuracy(const nnet::model_state& model, const dataset& ds, std::span<const std::size_t> test);

/// Mean and sample standard deviation (divisor n - 1; 0 for a single value).
std::pair<double, double> mean_and_std(std::span<const double> values);

/// Seed s trains init_model(derive_seed(base, {s, 0})) with shuffle seed
/// derive_seed(base, {s, 1}) on the train indices and scores the test indices.
eval_report evaluate(const dataset& ds, std::span<const std::size_t> train, std::span<const std::size_t> test,
                     const eval_options& opts);

std::vector<std::size_t> class_histogram(const dataset& ds, std::span<const std::size_t> indices);

/// CSV rows "index,label,f0..f{H-1}" of the fc1 activations, in index order.
void dump_features(const nnet::model_state& model, const dataset& ds, std::span<const std::size_t> indices,
                   const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Experiment configuration (INI, sections [data] [split] [expand] [eval])
// ---------------------------------------------------------------------------

struct experiment_config {
    sigsynth::gen_spec data;

    double target_frac = 0.01;
    double test_frac = 0.2;
    int snr_min_exclusive_db = 10;
    std::uint64_t split_seed = 0;

    std::vector<expansion::method> methods{expansion::method::duse};
    std::vector<double> rates{0.04};
    std::uint32_t rounds = 4;
    std::uint32_t expand_epochs = 20;
    bool balance = false;
    std::uint64_t expand_seed = 0;

    eval_options eval;

    /// Canonical key=value text; its digest names the experiment.
    std::string canonical() const;
    std::string experiment_id() const;
};

/// Every problem found in the config (unknown sections or keys, bad values).
class config_error : public invalid_input {
public:
    explicit config_error(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

experiment_config parse_config(const std::string& ini_text);
experiment_config load_config(const std::filesystem::path& path);

struct experiment_outputs {
    std::uint64_t dataset_digest = 0;
    std::vector<eval_report> reports;
    std::vector<std::filesystem::path> report_paths;
};

/// generate -> SNR filter -> splits -> expansion -> evaluation for every
/// (method, rate) pair. Writes the dataset, manifest, splits, expansion
/// results, score CSVs, features and eval reports under out_dir.
experiment_outputs run_experiment(const experiment_config& config, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

enum class table_format { csv, text };
table_format parse_table_format(const std::string& text);

/// Methods x rates table of "mean±std" accuracy cells in percent.
/// Rejects reports that come from different datasets.
std::string render_report(const std::vector<eval_report>& reports, table_format format);
std::string render_report(const std::vector<std::filesystem::path>& report_paths, table_format format);

}  // namespace duse::harness

#include <cstdio>

#include "duse/harness.hpp"
#include "json.hpp"

namespace duse::harness {

namespace {

std::string cell_name(expansion::method m, double rate) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_r%g", std::string(expansion::name(m)).c_str(), rate * 100.0);
    return buf;
}

}  // namespace

experiment_outputs run_experiment(const experiment_config& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string id = config.experiment_id();
    write_file_atomic(out_dir / "config.ini", config.canonical());

    // Dataset generation is a pure function of the [data] section; reuse an
    // existing file only when it is byte-identical to a fresh generation.
    const auto ds_path = out_dir / "dataset.amrd";
    const dataset ds = sigsynth::generate_dataset(config.data);
    const auto encoded = encode_dataset(ds);
    const std::uint64_t digest = fnv1a64(std::span<const std::byte>(encoded));
    if (!std::filesystem::exists(ds_path) || file_digest(ds_path) != digest)
        write_file_atomic(ds_path, std::span<const std::byte>(encoded));
    write_manifest(manifest_path_for(ds_path), sigsynth::class_names(config.data), ds, digest);

    const auto eligible = snr_eligible_indices(ds, config.snr_min_exclusive_db);
    if (eligible.empty())
        throw sizing_error("no records above " + std::to_string(config.snr_min_exclusive_db) + " dB");
    const auto splits = make_splits(ds, config.target_frac, config.test_frac, config.split_seed, digest, eligible);
    write_splits(splits, out_dir / "splits.json");

    experiment_outputs outputs;
    outputs.dataset_digest = digest;
    nlohmann::ordered_json timing;
    for (const auto m : config.methods) {
        for (const double rate : config.rates) {
            expansion::plan p;
            p.method = m;
            p.rate = rate;
            p.rounds = config.rounds;
            p.epochs_per_round = config.expand_epochs;
            p.seed = config.expand_seed;
            p.balance = config.balance;
            p.batch_size = config.eval.batch_size;
            p.learning_rate = config.eval.learning_rate;
            p.probe_epochs = config.eval.epochs;

            const std::string name = cell_name(m, rate);
            const auto result = expansion::expand(ds, splits, p, config.expand_seed);
            expansion::write_result(result, out_dir / ("expansion_" + name + ".json"));
            if (!result.round_reports.empty())
                scoring::write_score_report(result.round_reports.back(), out_dir / ("scores_" + name + ".csv"));

            auto report = evaluate(ds, result.expanded_target, splits.test, config.eval);
            report.experiment_id = id + "/" + name;
            report.dataset_digest = digest;
            report.method = std::string(expansion::name(m));
            report.rate = rate;
            report.rounds = p.effective_rounds();
            dump_features(*report.first_model, ds, result.expanded_target, out_dir / ("features_" + name + ".csv"));

            const auto path = out_dir / ("eval_" + name + ".json");
            write_file_atomic(path, report.to_json());
            timing[name] = report.wall_time_seconds;
            outputs.report_paths.push_back(path);
            outputs.reports.push_back(std::move(report));
        }
    }
    write_file_atomic(out_dir / "timing.json", timing.dump(2) + "\n");
    write_file_atomic(out_dir / "table.txt", render_report(outputs.reports, table_format::text));
    return outputs;
}

}  // namespace duse::harness

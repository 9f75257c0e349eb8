#include <chrono>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "duse/dataio.hpp"
#include "duse/expansion.hpp"
#include "duse/harness.hpp"
#include "duse/selftest.hpp"
#include "duse/sigsynth.hpp"

namespace {

using namespace duse;

std::vector<sigsynth::modulation> parse_schemes(const std::string& text) {
    std::vector<sigsynth::modulation> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(sigsynth::parse_modulation(item));
    return out;
}

void check_digest(const std::filesystem::path& data_path, const split_indices& splits, const dataset& ds) {
    const auto digest = file_digest(data_path);
    const auto problems = validate_splits(ds, splits, digest);
    if (!problems.empty()) {
        std::string msg = "splits do not match " + data_path.string() + ":";
        for (const auto& p : problems) msg += "\n  " + p;
        throw invalid_input(msg);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-driven data expansion for modulation recognition"};
    app.require_subcommand(1);

    // gen ---------------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "Synthesize a labeled modulation dataset");
    sigsynth::gen_spec spec;
    std::string schemes = "BPSK,QPSK,PSK8,PAM4,QAM16,QAM64,CPFSK,GFSK";
    std::string gen_out;
    gen->add_option("--out", gen_out, "Dataset file to write")->required();
    gen->add_option("--schemes", schemes, "Comma-separated schemes, in label order")->capture_default_str();
    gen->add_option("--snr-min", spec.snr_min_db, "Lowest SNR (dB)")->capture_default_str();
    gen->add_option("--snr-max", spec.snr_max_db, "Highest SNR (dB)")->capture_default_str();
    gen->add_option("--snr-step", spec.snr_step_db, "SNR step (dB)")->capture_default_str();
    gen->add_option("--per-class-per-snr", spec.per_class_per_snr, "Records per (class, SNR) cell")->capture_default_str();
    gen->add_option("--signal-len", spec.signal_len, "Samples per record")->capture_default_str();
    gen->add_option("--sps", spec.samples_per_symbol, "Samples per symbol")->capture_default_str();
    gen->add_option("--rolloff", spec.rrc_rolloff, "RRC roll-off")->capture_default_str();
    gen->add_option("--seed", spec.seed, "Generation seed")->capture_default_str();

    // split -------------------------------------------------------------------
    auto* split = app.add_subcommand("split", "Build target/auxiliary/test splits");
    std::string split_data, split_out;
    double target_frac = 0.01, test_frac = 0.2;
    int snr_min_exclusive = 10;
    std::uint64_t split_seed = 0;
    split->add_option("--data", split_data, "Dataset file")->required();
    split->add_option("--out", split_out, "Split sidecar JSON to write")->required();
    split->add_option("--target-frac", target_frac, "Class-balanced target fraction of the train pool")->capture_default_str();
    split->add_option("--test-frac", test_frac, "Per-class test fraction")->capture_default_str();
    split->add_option("--snr-min-exclusive", snr_min_exclusive, "Keep records with SNR strictly above this (dB)")
        ->capture_default_str();
    split->add_option("--seed", split_seed, "Split seed")->capture_default_str();

    // expand ------------------------------------------------------------------
    auto* exp = app.add_subcommand("expand", "Select auxiliary samples to migrate into the target set");
    std::string exp_data, exp_splits, exp_out, exp_scores, method_name = "duse";
    expansion::plan plan;
    std::uint64_t model_seed = 0;
    exp->add_option("--data", exp_data, "Dataset file")->required();
    exp->add_option("--splits", exp_splits, "Split sidecar JSON")->required();
    exp->add_option("--out", exp_out, "Expansion result JSON to write")->required();
    exp->add_option("--scores-out", exp_scores, "Write the last round's score report as CSV");
    exp->add_option("--method", method_name,
                    "duse|duse_balanced|duse_oneshot|margin|entropy|least_confidence|grand|herding|forgetting|random")
        ->capture_default_str();
    exp->add_option("--rate", plan.rate, "Expansion rate r in (0, 1]")->capture_default_str();
    exp->add_option("--rounds", plan.rounds, "Active-learning rounds")->capture_default_str();
    exp->add_option("--epochs", plan.epochs_per_round, "Training epochs per round")->capture_default_str();
    exp->add_flag("--balance", plan.balance, "Level per-class counts of the expanded target");
    exp->add_flag("--warm-start", plan.warm_start, "Keep training the previous round's model");
    exp->add_option("--seed", plan.seed, "Shuffle / random-selection seed")->capture_default_str();
    exp->add_option("--model-seed", model_seed, "Model initialization seed")->capture_default_str();
    exp->add_option("--probe-epochs", plan.probe_epochs, "Forgetting probe epochs")->capture_default_str();

    // eval --------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "Train on an expanded target and report test accuracy");
    std::string ev_data, ev_splits, ev_expansion, ev_out, ev_features, ev_id;
    harness::eval_options eopts;
    ev->add_option("--data", ev_data, "Dataset file")->required();
    ev->add_option("--splits", ev_splits, "Split sidecar JSON")->required();
    ev->add_option("--expansion", ev_expansion, "Expansion result JSON (omit to train on the plain target)");
    ev->add_option("--out", ev_out, "Eval report JSON to write")->required();
    ev->add_option("--features-out", ev_features, "Write seed-0 penultimate features of the training set as CSV");
    ev->add_option("--id", ev_id, "Experiment id recorded in the report");
    ev->add_option("--epochs", eopts.epochs, "Training epochs")->capture_default_str();
    ev->add_option("--seeds", eopts.seeds, "Independent runs")->capture_default_str();
    ev->add_option("--lr", eopts.learning_rate, "Adam learning rate")->capture_default_str();
    ev->add_option("--batch", eopts.batch_size, "Minibatch size")->capture_default_str();
    ev->add_option("--seed", eopts.base_seed, "Base seed")->capture_default_str();

    // report ------------------------------------------------------------------
    auto* rep = app.add_subcommand("report", "Tabulate eval reports (methods x rates)");
    std::vector<std::string> rep_inputs;
    std::string rep_format = "text";
    rep->add_option("reports", rep_inputs, "Eval report JSON files")->required();
    rep->add_option("--format", rep_format, "csv|text")->capture_default_str();

    // run ---------------------------------------------------------------------
    auto* run = app.add_subcommand("run", "Run a full experiment from an INI config");
    std::string run_config, run_out;
    run->add_option("--config", run_config, "INI config file")->required();
    run->add_option("--out", run_out, "Output directory")->required();

    // selftest ----------------------------------------------------------------
    auto* st = app.add_subcommand("selftest", "Run the gradient and scoring oracle suites");
    std::uint64_t st_seed = 2024;
    st->add_option("--seed", st_seed, "Instance seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            spec.schemes = parse_schemes(schemes);
            const auto ds = sigsynth::generate_dataset(spec);
            write_dataset(ds, gen_out);
            const auto digest = file_digest(gen_out);
            write_manifest(manifest_path_for(gen_out), sigsynth::class_names(spec), ds, digest);
            std::cout << "wrote " << ds.size() << " records to " << gen_out << " (digest " << digest_hex(digest) << ")\n";
        } else if (*split) {
            const auto ds = read_dataset(split_data);
            const auto digest = file_digest(split_data);
            const auto eligible = snr_eligible_indices(ds, snr_min_exclusive);
            if (eligible.empty()) throw sizing_error("no records above the SNR threshold");
            const auto s = make_splits(ds, target_frac, test_frac, split_seed, digest, eligible);
            write_splits(s, split_out);
            std::cout << "target " << s.target.size() << ", auxiliary " << s.auxiliary.size() << ", test "
                      << s.test.size() << "\n";
        } else if (*exp) {
            plan.method = expansion::parse_method(method_name);
            const auto ds = read_dataset(exp_data);
            const auto s = read_splits(exp_splits);
            check_digest(exp_data, s, ds);
            const auto result = expansion::expand(ds, s, plan, model_seed);
            expansion::write_result(result, exp_out);
            if (!exp_scores.empty() && !result.round_reports.empty())
                scoring::write_score_report(result.round_reports.back(), exp_scores);
            std::size_t selected = 0;
            for (const auto& r : result.per_round_selected) selected += r.size();
            std::cout << "selected " << selected << " samples in " << result.per_round_selected.size()
                      << " round(s); expanded target " << result.expanded_target.size() << "\n";
            for (const auto& d : result.diagnostics) std::cout << "  " << d << "\n";
        } else if (*ev) {
            const auto ds = read_dataset(ev_data);
            const auto s = read_splits(ev_splits);
            check_digest(ev_data, s, ds);
            index_list train = s.target;
            std::string method = "target_only";
            double rate = 0.0;
            std::uint32_t rounds = 0;
            if (!ev_expansion.empty()) {
                const auto r = expansion::read_result(ev_expansion);
                train = r.expanded_target;
                method = std::string(expansion::name(r.used_plan.method));
                rate = r.used_plan.rate;
                rounds = r.used_plan.effective_rounds();
            }
            auto report = harness::evaluate(ds, train, s.test, eopts);
            report.experiment_id = ev_id;
            report.dataset_digest = s.source_digest;
            report.method = method;
            report.rate = rate;
            report.rounds = rounds;
            write_file_atomic(ev_out, report.to_json());
            if (!ev_features.empty()) harness::dump_features(*report.first_model, ds, train, ev_features);
            std::printf("accuracy %.2f ± %.2f %% (%.1f s)\n", report.mean_accuracy * 100.0,
                        report.std_accuracy * 100.0, report.wall_time_seconds);
        } else if (*rep) {
            std::vector<std::filesystem::path> paths(rep_inputs.begin(), rep_inputs.end());
            std::cout << harness::render_report(paths, harness::parse_table_format(rep_format));
        } else if (*run) {
            const auto config = harness::load_config(run_config);
            const auto out = harness::run_experiment(config, run_out);
            std::cout << harness::render_report(out.reports, harness::table_format::text);
        } else if (*st) {
            bool ok = true;
            const auto g = oracle::gradient_suite(10, st_seed, 1e-3, &std::cerr);
            std::printf("%s gradient check: %zu configs, worst relative error %.3g\n", g.passed ? "PASS" : "FAIL", g.cases, g.worst);
            const auto sc = oracle::scoring_suite(1000, st_seed + 1, &std::cerr);
            std::printf("%s scoring oracle: %zu instances, worst score deviation %.3g\n", sc.passed ? "PASS" : "FAIL", sc.cases, sc.worst);
            const auto h = oracle::herding_suite(100, st_seed + 2, &std::cerr);
            std::printf("%s herding oracle: %zu greedy steps\n", h.passed ? "PASS" : "FAIL", h.cases);
            ok = g.passed && sc.passed && h.passed;
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

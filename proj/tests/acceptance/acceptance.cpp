// Acceptance run: property suites plus desk-scale directional checks.
// Prints one PASS/FAIL line per criterion; exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include "CLI11.hpp"
#include "duse/dataio.hpp"
#include "duse/expansion.hpp"
#include "duse/harness.hpp"
#include "duse/selftest.hpp"
#include "duse/sigsynth.hpp"
#include "json.hpp"

using namespace duse;
namespace fs = std::filesystem;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct verdict {
    int failures = 0;
    void line(int id, bool ok, const std::string& what, const std::string& detail, double secs, double limit) {
        const bool in_time = limit <= 0 || secs < limit;
        const bool pass = ok && in_time;
        if (!pass) ++failures;
        std::printf("%s  %d. %s: %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(), secs,
                    in_time ? "" : ", over time limit");
        std::fflush(stdout);
    }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

struct desk {
    dataset ds;
    split_indices splits;
};

// Default generator, SNR > 10 dB cells only, 1% balanced target.
desk make_desk() {
    desk d;
    d.ds = sigsynth::generate_dataset(sigsynth::gen_spec{});
    const auto digest = fnv1a64(std::span<const std::byte>(encode_dataset(d.ds)));
    const auto eligible = snr_eligible_indices(d.ds, 10);
    d.splits = make_splits(d.ds, 0.01, 0.2, 0, digest, eligible);
    return d;
}

expansion::plan make_plan(expansion::method m, double rate, std::uint64_t seed) {
    expansion::plan p;
    p.method = m;
    p.rate = rate;
    p.rounds = 4;
    p.seed = seed;
    return p;
}

bool loop_invariants(const expansion::result& r, const split_indices& s, std::size_t budget, std::string& why) {
    std::set<std::size_t> seen(s.target.begin(), s.target.end());
    const std::set<std::size_t> aux(s.auxiliary.begin(), s.auxiliary.end());
    std::size_t total = 0, previous = s.target.size();
    for (const auto& round : r.per_round_selected) {
        for (std::size_t i : round) {
            if (!aux.contains(i)) return why = "index " + std::to_string(i) + " not in the auxiliary pool", false;
            if (!seen.insert(i).second) return why = "index " + std::to_string(i) + " selected twice", false;
        }
        total += round.size();
        if (s.target.size() + total <= previous) return why = "target did not grow", false;
        previous = s.target.size() + total;
    }
    if (total != budget) return why = "selected " + std::to_string(total) + " != budget " + std::to_string(budget), false;
    if (r.expanded_target != index_list(seen.begin(), seen.end())) return why = "expanded target mismatch", false;
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string work_dir = "acceptance_work";
    app.add_option("--work-dir", work_dir, "Scratch directory")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work_dir);

    verdict v;
    nlohmann::ordered_json record;

    // 1. Gradient correctness ------------------------------------------------
    {
        const auto t0 = clock_type::now();
        const auto g = oracle::gradient_suite(10, 101, 1e-3);
        v.line(1, g.passed && g.cases == 10, "gradient check", fmt("10 configurations, worst relative error %.3g", g.worst),
               seconds_since(t0), 30);
    }
    // 2. Scoring oracle ------------------------------------------------------
    {
        const auto t0 = clock_type::now();
        const auto s = oracle::scoring_suite(1000, 202);
        v.line(2, s.passed && s.cases == 1000, "scoring oracle",
               fmt("1000 instances, worst score deviation %.3g", s.worst), seconds_since(t0), 30);
    }
    // 3. Herding optimality --------------------------------------------------
    {
        const auto t0 = clock_type::now();
        const auto h = oracle::herding_suite(100, 303);
        v.line(3, h.passed, "herding greedy optimality", fmt("100 trials, %g greedy steps", double(h.cases)),
               seconds_since(t0), 60);
    }

    auto t_desk = clock_type::now();
    const desk d = make_desk();
    const double desk_secs = seconds_since(t_desk);
    const std::size_t n_aux = d.splits.auxiliary.size();

    // 4. Loop invariants -----------------------------------------------------
    {
        const auto t0 = clock_type::now();
        const auto p = make_plan(expansion::method::duse, 0.07, 4);
        const std::size_t budget = expansion::budget_from_rate(p.rate, n_aux);
        const auto a = expansion::expand(d.ds, d.splits, p, 4);
        const auto b = expansion::expand(d.ds, d.splits, p, 4);
        std::string why;
        bool ok = loop_invariants(a, d.splits, budget, why);
        if (ok && a.per_round_selected.size() != 4) ok = false, why = "expected 4 rounds";
        if (ok && a.to_json() != b.to_json()) ok = false, why = "replays differ";
        const std::string detail = ok ? std::to_string(d.splits.target.size() + n_aux + d.splits.test.size()) +
                                            " eligible records, R = 4, " + std::to_string(budget) +
                                            " selected, replays identical"
                                      : why;
        v.line(4, ok, "loop invariants", detail, seconds_since(t0) + desk_secs, 300);
    }

    // 5-7. Desk-scale directional checks, 3 paired seeds ----------------------
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const std::vector<double> duse_rates{0.01, 0.04, 0.07, 0.09};
    std::map<std::pair<std::string, double>, std::vector<double>> acc;
    auto run_cell = [&](expansion::method m, double rate) {
        for (const auto s : seeds) {
            const auto r = expansion::expand(d.ds, d.splits, make_plan(m, rate, s), s);
            harness::eval_options opts;  // default protocol: 3 training runs per expansion
            opts.base_seed = s;
            const auto rep = harness::evaluate(d.ds, r.expanded_target, d.splits.test, opts);
            acc[{std::string(expansion::name(m)), rate}].push_back(rep.mean_accuracy * 100.0);
        }
    };
    auto mean_of = [&](const std::string& m, double rate) {
        const auto& xs = acc.at({m, rate});
        return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    };

    {
        const auto t0 = clock_type::now();
        for (double r : duse_rates) run_cell(expansion::method::duse, r);
        std::string detail = "DUSE mean accuracy";
        int inversions = 0;
        bool large_drop = false;
        for (std::size_t i = 0; i < duse_rates.size(); ++i) {
            const double m = mean_of("duse", duse_rates[i]);
            detail += fmt(" %g%%:%.2f", duse_rates[i] * 100, m);
            if (i > 0) {
                const double drop = mean_of("duse", duse_rates[i - 1]) - m;
                if (drop > 0) ++inversions, large_drop |= drop > 1.0;
            }
        }
        v.line(5, inversions <= 1 && !large_drop, "expansion-rate trend", detail, seconds_since(t0), 900);
    }
    {
        const auto t0 = clock_type::now();
        run_cell(expansion::method::duse_oneshot, 0.07);
        const double gap = mean_of("duse", 0.07) - mean_of("duse_oneshot", 0.07);
        v.line(6, gap >= 0, "iterative vs one-shot at 7%",
               fmt("duse %.2f, duse_oneshot %.2f, difference %+.2f points", mean_of("duse", 0.07),
                   mean_of("duse_oneshot", 0.07), gap),
               seconds_since(t0), 0);
    }
    {
        const auto t0 = clock_type::now();
        bool ok = true;
        std::string detail;
        for (double r : {0.04, 0.07, 0.09}) {
            run_cell(expansion::method::random, r);
            const double du = mean_of("duse", r), ra = mean_of("random", r);
            ok &= du >= ra;
            detail += fmt("%g%%: duse %.2f vs random %.2f; ", r * 100, du, ra);
        }
        detail.resize(detail.size() - 2);
        v.line(7, ok, "DUSE vs random", detail, seconds_since(t0), 0);
    }
    for (const auto& [key, xs] : acc) record["accuracy"][key.first + "@" + fmt("%g", key.second * 100)] = xs;

    // 8. Class balance -------------------------------------------------------
    {
        const auto t0 = clock_type::now();
        const auto r = expansion::expand(d.ds, d.splits, make_plan(expansion::method::duse_balanced, 0.07, 8), 8);
        const auto counts = class_counts(d.ds, r.expanded_target);
        const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
        bool ok = *hi - *lo <= 1 && r.diagnostics.empty();

        // Force depletion: leave two auxiliary samples of class 0.
        auto thin = d.splits;
        thin.auxiliary.clear();
        std::size_t kept = 0;
        for (std::size_t i : d.splits.auxiliary)
            if (d.ds.records[i].label != 0 || kept++ < 2) thin.auxiliary.push_back(i);
        const auto dep = expansion::expand(d.ds, thin, make_plan(expansion::method::duse_balanced, 0.3, 8), 8);
        ok &= !dep.diagnostics.empty();
        v.line(8, ok, "class balance",
               fmt("per-class totals %g..%g; forced depletion gave %g diagnostic(s)", double(*lo), double(*hi),
                   double(dep.diagnostics.size())),
               seconds_since(t0), 0);
    }

    // 9. Data substrate ------------------------------------------------------
    {
        const auto t0 = clock_type::now();
        bool ok = true;
        double worst_db = 0.0;
        sigsynth::gen_spec base;
        for (int level : base.snr_levels()) {
            sigsynth::gen_spec spec;
            spec.snr_min_db = spec.snr_max_db = level;
            spec.per_class_per_snr = 1250;  // 10,000 records per level
            spec.seed = 909;
            const auto noisy = sigsynth::generate_dataset(spec);
            const auto clean = sigsynth::generate_dataset(spec, false);
            double ps = 0.0, pn = 0.0;
            for (std::size_t i = 0; i < noisy.size(); ++i)
                for (std::size_t j = 0; j < noisy.records[i].iq.size(); ++j) {
                    const double s = clean.records[i].iq[j], n = noisy.records[i].iq[j] - s;
                    ps += s * s;
                    pn += n * n;
                }
            worst_db = std::max(worst_db, std::abs(10.0 * std::log10(ps / pn) - level));
        }
        ok &= worst_db <= 0.5;

        const auto path = fs::path(work_dir) / "roundtrip.amrd";
        write_dataset(d.ds, path);
        const auto bytes = read_file_bytes(path);
        const auto back = read_dataset(path);
        const bool identical = bytes == encode_dataset(d.ds) && encode_dataset(back) == bytes;
        ok &= identical;

        std::size_t bad_splits = 0;
        const auto eligible = snr_eligible_indices(d.ds, 10);
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto s = make_splits(d.ds, 0.01, 0.2, seed, 9, eligible);
            const auto t = class_counts(d.ds, s.target), e = class_counts(d.ds, s.test);
            const bool good = validate_splits(d.ds, s, 9).empty() &&
                              s.target.size() + s.auxiliary.size() + s.test.size() == eligible.size() &&
                              std::all_of(t.begin(), t.end(), [&](std::size_t c) { return c == t[0]; }) &&
                              std::all_of(e.begin(), e.end(), [&](std::size_t c) { return c == e[0]; });
            bad_splits += !good;
        }
        ok &= bad_splits == 0;
        v.line(9, ok, "data substrate",
               fmt("worst SNR error %.3f dB over %g levels; round trip ", worst_db, double(base.snr_levels().size())) +
                   (identical ? "identical" : "differs") + "; " + std::to_string(100 - bad_splits) + "/100 split seeds valid",
               seconds_since(t0), 0);
    }

    record["failures"] = v.failures;
    write_file_atomic(fs::path(work_dir) / "acceptance.json", record.dump(2) + "\n");
    std::printf("%d criterion(s) failed\n", v.failures);
    return v.failures == 0 ? 0 : 1;
}

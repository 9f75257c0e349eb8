#include "duse/sigsynth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace duse::sigsynth {

namespace {

using cd = std::complex<double>;

std::uint32_t gray_decode(std::uint32_t g) {
    std::uint32_t b = g;
    for (std::uint32_t shift = 1; shift < 32; shift <<= 1) b ^= b >> shift;
    return b;
}

// Position p of an m-level axis mapped to an odd-integer amplitude.
double pam_level(std::uint32_t position, std::uint32_t levels) {
    return 2.0 * position - (levels - 1.0);
}

cd constellation_point(modulation m, std::uint32_t symbol) {
    using std::numbers::pi;
    switch (m) {
        case modulation::bpsk:
            return {symbol == 0 ? 1.0 : -1.0, 0.0};
        case modulation::qpsk:
            return std::polar(1.0, pi / 4 + pi / 2 * gray_decode(symbol));
        case modulation::psk8:
            return std::polar(1.0, pi / 4 * gray_decode(symbol));
        case modulation::pam4:
            return {pam_level(gray_decode(symbol), 4) / std::sqrt(5.0), 0.0};
        case modulation::qam16: {
            const double scale = 1.0 / std::sqrt(10.0);
            return {pam_level(gray_decode(symbol >> 2), 4) * scale, pam_level(gray_decode(symbol & 3u), 4) * scale};
        }
        case modulation::qam64: {
            const double scale = 1.0 / std::sqrt(42.0);
            return {pam_level(gray_decode(symbol >> 3), 8) * scale, pam_level(gray_decode(symbol & 7u), 8) * scale};
        }
        case modulation::cpfsk:
        case modulation::gfsk:
            break;
    }
    throw invalid_input("map_symbols: " + std::string(name(m)) + " has no constellation");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Complex baseband samples from per-sample phase increments.
std::vector<cd> integrate_phase(const std::vector<double>& dphi) {
    std::vector<cd> out(dphi.size());
    double phase = 0.0;
    for (std::size_t n = 0; n < dphi.size(); ++n) {
        out[n] = std::polar(1.0, phase);
        phase += dphi[n];
    }
    return out;
}

std::vector<cd> linear_waveform(modulation m, const std::vector<std::uint32_t>& symbols, const gen_spec& spec) {
    const std::uint32_t sps = spec.samples_per_symbol;
    const auto points = map_symbols(m, symbols);
    const auto taps = rrc_taps(spec.rrc_rolloff, sps);
    const std::size_t delay = taps.size() / 2;
    const std::size_t total = symbols.size() * sps;

    // Centre the output window inside the symbol stream so both filter
    // transients fall outside it whenever spare symbols were drawn.
    const std::size_t start = (total - spec.signal_len) / 2;
    std::vector<cd> out(spec.signal_len);
    for (std::size_t n = 0; n < spec.signal_len; ++n) {
        // y[t] = sum_k s_k h[t - k*sps + delay], t = start + n
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(start + n);
        cd acc{0.0, 0.0};
        for (std::size_t k = 0; k < symbols.size(); ++k) {
            const std::ptrdiff_t tap = t - static_cast<std::ptrdiff_t>(k * sps) + static_cast<std::ptrdiff_t>(delay);
            if (tap < 0 || tap >= static_cast<std::ptrdiff_t>(taps.size())) continue;
            acc += cd(points[k]) * taps[static_cast<std::size_t>(tap)];
        }
        out[n] = acc;
    }
    return out;
}

std::vector<cd> fsk_waveform(modulation m, const std::vector<std::uint32_t>& symbols, const gen_spec& spec) {
    const std::uint32_t sps = spec.samples_per_symbol;
    const std::size_t total = symbols.size() * sps;
    const double step = std::numbers::pi * cpfsk_mod_index;
    std::vector<double> dphi(total, 0.0);
    if (m == modulation::cpfsk) {
        for (std::size_t k = 0; k < symbols.size(); ++k) {
            const double a = symbols[k] == 0 ? -1.0 : 1.0;
            for (std::uint32_t j = 0; j < sps; ++j) dphi[k * sps + j] = step * a / sps;
        }
    } else {
        const auto pulse = gfsk_frequency_pulse(gfsk_bt, sps);
        const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(pulse.size() / 2);
        for (std::size_t k = 0; k < symbols.size(); ++k) {
            const double a = symbols[k] == 0 ? -1.0 : 1.0;
            // Pulse centred on the middle of symbol k.
            const std::ptrdiff_t origin = static_cast<std::ptrdiff_t>(k * sps + sps / 2) - half;
            for (std::size_t j = 0; j < pulse.size(); ++j) {
                const std::ptrdiff_t n = origin + static_cast<std::ptrdiff_t>(j);
                if (n >= 0 && n < static_cast<std::ptrdiff_t>(total)) dphi[static_cast<std::size_t>(n)] += step * a * pulse[j];
            }
        }
    }
    const auto full = integrate_phase(dphi);
    const std::size_t start = (total - spec.signal_len) / 2;
    return {full.begin() + static_cast<std::ptrdiff_t>(start),
            full.begin() + static_cast<std::ptrdiff_t>(start + spec.signal_len)};
}

}  // namespace

std::string_view name(modulation m) {
    switch (m) {
        case modulation::bpsk: return "BPSK";
        case modulation::qpsk: return "QPSK";
        case modulation::psk8: return "PSK8";
        case modulation::pam4: return "PAM4";
        case modulation::qam16: return "QAM16";
        case modulation::qam64: return "QAM64";
        case modulation::cpfsk: return "CPFSK";
        case modulation::gfsk: return "GFSK";
    }
    return "?";
}

modulation parse_modulation(std::string_view text) {
    for (modulation m : all_modulations) {
        const auto n = name(m);
        if (n.size() == text.size() &&
            std::equal(n.begin(), n.end(), text.begin(), [](char a, char b) { return a == static_cast<char>(std::toupper(static_cast<unsigned char>(b))); }))
            return m;
    }
    throw invalid_input("unknown modulation scheme: " + std::string(text));
}

bool is_linear(modulation m) { return m != modulation::cpfsk && m != modulation::gfsk; }

std::uint32_t constellation_order(modulation m) {
    switch (m) {
        case modulation::bpsk: return 2;
        case modulation::qpsk: return 4;
        case modulation::psk8: return 8;
        case modulation::pam4: return 4;
        case modulation::qam16: return 16;
        case modulation::qam64: return 64;
        case modulation::cpfsk:
        case modulation::gfsk: return 2;
    }
    return 0;
}

void gen_spec::validate() const {
    if (schemes.empty()) throw invalid_input("gen_spec: at least one scheme required");
    if (snr_step_db <= 0) throw invalid_input("gen_spec: snr_step_db must be positive");
    if (snr_min_db > snr_max_db) throw invalid_input("gen_spec: snr_min_db exceeds snr_max_db");
    if ((snr_max_db - snr_min_db) % snr_step_db != 0)
        throw invalid_input("gen_spec: snr range is not a multiple of snr_step_db");
    if (per_class_per_snr == 0) throw invalid_input("gen_spec: per_class_per_snr must be positive");
    if (signal_len == 0) throw invalid_input("gen_spec: signal_len must be positive");
    if (samples_per_symbol == 0) throw invalid_input("gen_spec: samples_per_symbol must be positive");
    if (signal_len % samples_per_symbol != 0)
        throw invalid_input("gen_spec: signal_len must be divisible by samples_per_symbol");
    if (!(rrc_rolloff > 0.0 && rrc_rolloff <= 1.0)) throw invalid_input("gen_spec: rrc_rolloff must lie in (0, 1]");
    if (snr_min_db < INT16_MIN || snr_max_db > INT16_MAX) throw invalid_input("gen_spec: snr outside int16 range");
    if (schemes.size() > 65535) throw invalid_input("gen_spec: too many schemes");
}

std::vector<int> gen_spec::snr_levels() const {
    std::vector<int> levels;
    for (int s = snr_min_db; s <= snr_max_db; s += snr_step_db) levels.push_back(s);
    return levels;
}

std::size_t gen_spec::symbols_per_record() const {
    return signal_len / samples_per_symbol + rrc_span_symbols;
}

std::vector<std::complex<float>> map_symbols(modulation m, std::span<const std::uint32_t> symbol_indices) {
    const std::uint32_t order = constellation_order(m);
    std::vector<std::complex<float>> out;
    out.reserve(symbol_indices.size());
    for (std::uint32_t s : symbol_indices) {
        if (s >= order)
            throw invalid_input("map_symbols: index " + std::to_string(s) + " out of range for " +
                                std::string(name(m)));
        const cd p = constellation_point(m, s);
        out.emplace_back(static_cast<float>(p.real()), static_cast<float>(p.imag()));
    }
    return out;
}

std::vector<double> rrc_taps(double rolloff, std::uint32_t samples_per_symbol) {
    using std::numbers::pi;
    const double beta = rolloff;
    const int half = rrc_span_symbols * static_cast<int>(samples_per_symbol) / 2;
    std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
    for (int i = -half; i <= half; ++i) {
        const double t = static_cast<double>(i) / samples_per_symbol;
        double h;
        if (i == 0) {
            h = 1.0 - beta + 4.0 * beta / pi;
        } else if (std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-9) {
            h = beta / std::numbers::sqrt2 *
                ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
        } else {
            h = (std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta))) /
                (pi * t * (1.0 - 16.0 * beta * beta * t * t));
        }
        taps[static_cast<std::size_t>(i + half)] = h;
    }
    double energy = 0.0;
    for (double h : taps) energy += h * h;
    const double norm = 1.0 / std::sqrt(energy);
    for (double& h : taps) h *= norm;
    return taps;
}

std::vector<double> gfsk_frequency_pulse(double bt, std::uint32_t samples_per_symbol) {
    // Gaussian of std sigma = sqrt(ln 2) / (2 pi BT) symbol periods convolved with a unit rect.
    const double sigma = std::sqrt(std::log(2.0)) / (2.0 * std::numbers::pi * bt);
    const std::size_t n = static_cast<std::size_t>(gfsk_span_symbols) * samples_per_symbol;
    std::vector<double> pulse(n);
    double sum = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        const double t = (static_cast<double>(m) + 0.5 - static_cast<double>(n) / 2.0) / samples_per_symbol;
        pulse[m] = normal_cdf((t + 0.5) / sigma) - normal_cdf((t - 0.5) / sigma);
        sum += pulse[m];
    }
    for (double& p : pulse) p /= sum;
    return pulse;
}

std::vector<std::uint32_t> draw_symbols(modulation m, std::size_t symbol_count, std::uint64_t stream_seed) {
    rng gen(stream_seed);
    const std::uint32_t order = constellation_order(m);
    std::vector<std::uint32_t> symbols(symbol_count);
    for (auto& s : symbols) s = static_cast<std::uint32_t>(gen.below(order));
    return symbols;
}

std::vector<std::complex<float>> synthesize_waveform(modulation m, std::size_t symbol_count, const gen_spec& spec,
                                                     std::uint64_t stream_seed) {
    spec.validate();
    if (symbol_count * spec.samples_per_symbol < spec.signal_len)
        throw invalid_input("synthesize_waveform: symbol_count * samples_per_symbol < signal_len");
    const auto symbols = draw_symbols(m, symbol_count, stream_seed);
    const auto wave = is_linear(m) ? linear_waveform(m, symbols, spec) : fsk_waveform(m, symbols, spec);

    double power = 0.0;
    for (const cd& x : wave) power += std::norm(x);
    power /= static_cast<double>(wave.size());
    const double scale = power > 0.0 ? 1.0 / std::sqrt(power) : 1.0;

    std::vector<std::complex<float>> out(wave.size());
    for (std::size_t n = 0; n < wave.size(); ++n)
        out[n] = {static_cast<float>(wave[n].real() * scale), static_cast<float>(wave[n].imag() * scale)};
    return out;
}

std::vector<std::complex<float>> apply_awgn(std::span<const std::complex<float>> signal, int snr_db,
                                            std::uint64_t noise_seed) {
    rng gen(noise_seed);
    const double sigma = std::sqrt(std::pow(10.0, -snr_db / 10.0) / 2.0);
    std::vector<std::complex<float>> out(signal.size());
    for (std::size_t n = 0; n < signal.size(); ++n) {
        const double ni = gen.normal() * sigma;
        const double nq = gen.normal() * sigma;
        out[n] = {static_cast<float>(signal[n].real() + ni), static_cast<float>(signal[n].imag() + nq)};
    }
    return out;
}

std::uint64_t record_seed(std::uint64_t base, std::uint32_t class_id, int snr_db, std::uint32_t index,
                          std::uint32_t purpose) {
    return derive_seed(base, {class_id, static_cast<std::uint64_t>(static_cast<std::int64_t>(snr_db)), index, purpose});
}

namespace {

signal_record make_record(const gen_spec& spec, std::uint32_t class_id, int snr_db, std::uint32_t index,
                          bool with_noise) {
    const modulation m = spec.schemes[class_id];
    auto wave = synthesize_waveform(m, spec.symbols_per_record(), spec, record_seed(spec.seed, class_id, snr_db, index, 0));
    if (with_noise) wave = apply_awgn(wave, snr_db, record_seed(spec.seed, class_id, snr_db, index, 1));
    signal_record rec;
    rec.label = static_cast<std::uint16_t>(class_id);
    rec.snr_db = static_cast<std::int16_t>(snr_db);
    rec.iq.resize(2 * static_cast<std::size_t>(spec.signal_len));
    for (std::size_t n = 0; n < wave.size(); ++n) {
        rec.iq[n] = wave[n].real();
        rec.iq[spec.signal_len + n] = wave[n].imag();
    }
    return rec;
}

dataset empty_dataset(const gen_spec& spec) {
    dataset ds;
    ds.signal_len = spec.signal_len;
    ds.num_classes = static_cast<std::uint32_t>(spec.schemes.size());
    ds.records.resize(spec.schemes.size() * spec.snr_levels().size() * spec.per_class_per_snr);
    return ds;
}

}  // namespace

dataset generate_dataset(const gen_spec& spec, bool with_noise) {
    spec.validate();
    dataset ds = empty_dataset(spec);
    const auto levels = spec.snr_levels();
    const std::int64_t cells = static_cast<std::int64_t>(spec.schemes.size() * levels.size());
    const std::size_t per_cell = spec.per_class_per_snr;

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        const auto class_id = static_cast<std::uint32_t>(static_cast<std::size_t>(cell) / levels.size());
        const int snr = levels[static_cast<std::size_t>(cell) % levels.size()];
        const std::size_t base = static_cast<std::size_t>(cell) * per_cell;
        for (std::uint32_t i = 0; i < per_cell; ++i) ds.records[base + i] = make_record(spec, class_id, snr, i, with_noise);
    }
    return ds;
}

dataset generate_dataset_serial(const gen_spec& spec, bool with_noise) {
    spec.validate();
    dataset ds = empty_dataset(spec);
    std::size_t pos = 0;
    for (std::uint32_t c = 0; c < spec.schemes.size(); ++c)
        for (int snr : spec.snr_levels())
            for (std::uint32_t i = 0; i < spec.per_class_per_snr; ++i)
                ds.records[pos++] = make_record(spec, c, snr, i, with_noise);
    return ds;
}

std::vector<std::string> class_names(const gen_spec& spec) {
    std::vector<std::string> names;
    for (modulation m : spec.schemes) names.emplace_back(name(m));
    return names;
}

}  // namespace duse::sigsynth

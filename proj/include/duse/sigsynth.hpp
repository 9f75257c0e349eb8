#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duse/dataio.hpp"

namespace duse::sigsynth {

enum class modulation : std::uint8_t { bpsk, qpsk, psk8, pam4, qam16, qam64, cpfsk, gfsk };

inline constexpr modulation all_modulations[] = {
    modulation::bpsk, modulation::qpsk,  modulation::psk8,  modulation::pam4,
    modulation::qam16, modulation::qam64, modulation::cpfsk, modulation::gfsk,
};

std::string_view name(modulation m);
modulation parse_modulation(std::string_view text);

/// Linear schemes map symbols onto a constellation; CPFSK/GFSK integrate phase.
bool is_linear(modulation m);
/// Alphabet size of the symbol stream (2 for the binary FSK schemes).
std::uint32_t constellation_order(modulation m);

inline constexpr double cpfsk_mod_index = 0.5;
inline constexpr double gfsk_bt = 0.35;
inline constexpr int rrc_span_symbols = 8;
inline constexpr int gfsk_span_symbols = 4;

struct gen_spec {
    std::vector<modulation> schemes{std::begin(all_modulations), std::end(all_modulations)};
    int snr_min_db = -20;
    int snr_max_db = 18;
    int snr_step_db = 2;
    std::uint32_t per_class_per_snr = 125;
    std::uint32_t signal_len = 128;
    std::uint32_t samples_per_symbol = 8;
    double rrc_rolloff = 0.35;
    std::uint64_t seed = 1;

    /// Throws invalid_input naming the first violated constraint.
    void validate() const;
    std::vector<int> snr_levels() const;
    /// Symbols drawn per record: enough to cover signal_len plus filter transients.
    std::size_t symbols_per_record() const;
};

/// Gray-mapped, unit-average-energy constellation points. Rejects indices
/// outside the alphabet and the non-linear (FSK) schemes.
std::vector<std::complex<float>> map_symbols(modulation m, std::span<const std::uint32_t> symbol_indices);

/// Root-raised-cosine taps (unit energy), span rrc_span_symbols, odd length.
std::vector<double> rrc_taps(double rolloff, std::uint32_t samples_per_symbol);

/// Rect-filtered Gaussian frequency pulse for GFSK, sampled at
/// t_m = (m + 0.5 - span*sps/2) / sps symbol periods and normalized to sum 1.
std::vector<double> gfsk_frequency_pulse(double bt, std::uint32_t samples_per_symbol);

/// Symbol stream of a record: rng(stream_seed).below(order), symbol_count draws.
std::vector<std::uint32_t> draw_symbols(modulation m, std::size_t symbol_count, std::uint64_t stream_seed);

/// Noise-free waveform of spec.signal_len samples, renormalized to unit power.
std::vector<std::complex<float>> synthesize_waveform(modulation m, std::size_t symbol_count,
                                                     const gen_spec& spec, std::uint64_t stream_seed);

/// Adds circularly-symmetric Gaussian noise of per-sample variance 10^(-snr/10).
std::vector<std::complex<float>> apply_awgn(std::span<const std::complex<float>> signal, int snr_db,
                                            std::uint64_t noise_seed);

/// Per-record seeds: derive_seed(spec.seed, {class, snr (two's complement), index, purpose}),
/// purpose 0 for the symbol stream and 1 for the noise.
std::uint64_t record_seed(std::uint64_t base, std::uint32_t class_id, int snr_db, std::uint32_t index,
                          std::uint32_t purpose);

/// Records ordered class-major, then SNR ascending, then index.
/// OpenMP-parallel over (class, SNR) cells; bit-identical to the serial path.
dataset generate_dataset(const gen_spec& spec, bool with_noise = true);
dataset generate_dataset_serial(const gen_spec& spec, bool with_noise = true);

std::vector<std::string> class_names(const gen_spec& spec);

}  // namespace duse::sigsynth

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "duse/common.hpp"

namespace duse {

/// One labeled IQ frame. `iq` is channel-major: I[0..L) followed by Q[0..L).
struct signal_record {
    std::uint16_t label = 0;
    std::int16_t snr_db = 0;
    std::vector<float> iq;

    bool operator==(const signal_record&) const = default;
};

struct dataset {
    std::uint32_t signal_len = 0;
    std::uint32_t num_classes = 0;
    std::vector<signal_record> records;

    std::size_t size() const noexcept { return records.size(); }
    bool operator==(const dataset&) const = default;
};

// ---------------------------------------------------------------------------
// Binary dataset file ("AMRD", version 1). All fields little-endian.
//
//   offset  size  field
//   0       4     magic "AMRD"
//   4       4     version (u32) = 1
//   8       8     num_samples (u64)
//   16      4     signal_len (u32)
//   20      4     num_channels (u32) = 2
//   24      4     num_classes (u32)
//   28      ...   records: label u16, snr_db i16, 2*signal_len float32
// ---------------------------------------------------------------------------

inline constexpr char dataset_magic[4] = {'A', 'M', 'R', 'D'};
inline constexpr std::uint32_t dataset_version = 1;
inline constexpr std::size_t dataset_header_size = 28;

constexpr std::size_t record_size_bytes(std::uint32_t signal_len) {
    return 4 + 8 * static_cast<std::size_t>(signal_len);
}

std::vector<std::byte> encode_dataset(const dataset& ds);
dataset decode_dataset(std::span<const std::byte> bytes);

void write_dataset(const dataset& ds, const std::filesystem::path& path);
dataset read_dataset(const std::filesystem::path& path);

/// Sidecar listing class names in label order.
void write_manifest(const std::filesystem::path& path, const std::vector<std::string>& class_names,
                    const dataset& ds, std::uint64_t digest);
std::vector<std::string> read_manifest_classes(const std::filesystem::path& path);
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

// ---------------------------------------------------------------------------
// SNR filtering and splits
// ---------------------------------------------------------------------------

/// Keeps records with snr_db strictly greater than the threshold, in order.
std::vector<signal_record> filter_by_snr(std::span<const signal_record> records, int min_exclusive_db);

/// Indices of records with snr_db strictly greater than the threshold.
index_list snr_eligible_indices(const dataset& ds, int min_exclusive_db);

struct split_indices {
    index_list target;
    index_list auxiliary;
    index_list test;
    std::uint64_t source_digest = 0;

    bool operator==(const split_indices&) const = default;
};

/// Stratified test draw, then an equal per-class target quota of
/// round(target_fraction * train_pool / C); the rest of the pool is auxiliary.
/// `eligible` restricts the pool (e.g. to an SNR-filtered subset); empty means all.
split_indices make_splits(const dataset& ds, double target_fraction, double test_fraction,
                          std::uint64_t seed, std::uint64_t source_digest,
                          std::span<const std::size_t> eligible = {});

/// Returns every violated split invariant; empty means valid.
std::vector<std::string> validate_splits(const dataset& ds, const split_indices& splits,
                                         std::uint64_t dataset_digest);

std::string splits_to_json(const split_indices& splits);
split_indices splits_from_json(const std::string& text);
void write_splits(const split_indices& splits, const std::filesystem::path& path);
split_indices read_splits(const std::filesystem::path& path);

std::vector<std::size_t> class_counts(const dataset& ds, std::span<const std::size_t> indices);

}  // namespace duse

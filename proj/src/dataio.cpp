#include "duse/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace duse {

namespace {

template <class T>
void put(std::vector<std::byte>& out, T value) {
    const auto* p = reinterpret_cast<const std::byte*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(std::span<const std::byte> bytes, std::size_t offset) {
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    return value;
}

void check_header_invariants(const dataset& ds) {
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        if (r.label >= ds.num_classes)
            throw invalid_input("record " + std::to_string(i) + " label " + std::to_string(r.label) +
                                " >= num_classes " + std::to_string(ds.num_classes));
        if (r.iq.size() != 2 * static_cast<std::size_t>(ds.signal_len))
            throw invalid_input("record " + std::to_string(i) + " has " + std::to_string(r.iq.size()) +
                                " samples, expected " + std::to_string(2 * ds.signal_len));
        for (float v : r.iq)
            if (!std::isfinite(v)) throw invalid_input("record " + std::to_string(i) + " contains a non-finite value");
    }
}

}  // namespace

std::vector<std::byte> encode_dataset(const dataset& ds) {
    check_header_invariants(ds);
    std::vector<std::byte> out;
    out.reserve(dataset_header_size + ds.records.size() * record_size_bytes(ds.signal_len));
    for (char c : dataset_magic) out.push_back(static_cast<std::byte>(c));
    put<std::uint32_t>(out, dataset_version);
    put<std::uint64_t>(out, ds.records.size());
    put<std::uint32_t>(out, ds.signal_len);
    put<std::uint32_t>(out, 2);
    put<std::uint32_t>(out, ds.num_classes);
    for (const auto& r : ds.records) {
        put<std::uint16_t>(out, r.label);
        put<std::int16_t>(out, r.snr_db);
        const auto* p = reinterpret_cast<const std::byte*>(r.iq.data());
        out.insert(out.end(), p, p + r.iq.size() * sizeof(float));
    }
    return out;
}

dataset decode_dataset(std::span<const std::byte> bytes) {
    if (bytes.size() < dataset_header_size)
        throw corrupt_file("truncated header: expected " + std::to_string(dataset_header_size) + " bytes, got " +
                               std::to_string(bytes.size()),
                           bytes.size());
    if (std::memcmp(bytes.data(), dataset_magic, 4) != 0) throw corrupt_file("bad magic, expected \"AMRD\"", 0);
    const auto version = get<std::uint32_t>(bytes, 4);
    if (version != dataset_version)
        throw corrupt_file("unsupported version " + std::to_string(version) + ", expected " +
                               std::to_string(dataset_version),
                           4);
    const auto num_samples = get<std::uint64_t>(bytes, 8);
    dataset ds;
    ds.signal_len = get<std::uint32_t>(bytes, 16);
    const auto channels = get<std::uint32_t>(bytes, 20);
    ds.num_classes = get<std::uint32_t>(bytes, 24);
    if (channels != 2) throw corrupt_file("num_channels is " + std::to_string(channels) + ", must be 2", 20);
    if (ds.signal_len == 0) throw corrupt_file("signal_len is 0", 16);

    const std::size_t rec_size = record_size_bytes(ds.signal_len);
    if (num_samples > (bytes.size() - dataset_header_size) / rec_size + 1 ||
        bytes.size() != dataset_header_size + num_samples * rec_size) {
        const std::uint64_t expected = dataset_header_size + num_samples * rec_size;
        throw corrupt_file("file length mismatch: expected " + std::to_string(expected) + " bytes for " +
                               std::to_string(num_samples) + " records, actual " + std::to_string(bytes.size()),
                           std::min<std::uint64_t>(bytes.size(), expected));
    }

    ds.records.resize(static_cast<std::size_t>(num_samples));
    std::size_t off = dataset_header_size;
    for (auto& r : ds.records) {
        r.label = get<std::uint16_t>(bytes, off);
        r.snr_db = get<std::int16_t>(bytes, off + 2);
        if (r.label >= ds.num_classes)
            throw corrupt_file("label " + std::to_string(r.label) + " >= num_classes " + std::to_string(ds.num_classes), off);
        r.iq.resize(2 * static_cast<std::size_t>(ds.signal_len));
        std::memcpy(r.iq.data(), bytes.data() + off + 4, r.iq.size() * sizeof(float));
        for (std::size_t k = 0; k < r.iq.size(); ++k)
            if (!std::isfinite(r.iq[k])) throw corrupt_file("non-finite sample value", off + 4 + k * sizeof(float));
        off += rec_size;
    }
    return ds;
}

void write_dataset(const dataset& ds, const std::filesystem::path& path) {
    write_file_atomic(path, std::span<const std::byte>(encode_dataset(ds)));
}

dataset read_dataset(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_dataset(bytes);
    } catch (const corrupt_file& e) {
        throw corrupt_file(path.string() + ": " + e.what(), e.offset());
    }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
    auto p = dataset_path;
    p += ".manifest.json";
    return p;
}

void write_manifest(const std::filesystem::path& path, const std::vector<std::string>& class_names,
                    const dataset& ds, std::uint64_t digest) {
    nlohmann::ordered_json j;
    j["classes"] = class_names;
    j["num_samples"] = ds.records.size();
    j["signal_len"] = ds.signal_len;
    j["source_digest"] = digest_hex(digest);
    write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<std::string> read_manifest_classes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    const auto j = nlohmann::json::parse(in);
    return j.at("classes").get<std::vector<std::string>>();
}

std::vector<signal_record> filter_by_snr(std::span<const signal_record> records, int min_exclusive_db) {
    std::vector<signal_record> out;
    for (const auto& r : records)
        if (r.snr_db > min_exclusive_db) out.push_back(r);
    return out;
}

index_list snr_eligible_indices(const dataset& ds, int min_exclusive_db) {
    index_list out;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        if (ds.records[i].snr_db > min_exclusive_db) out.push_back(i);
    return out;
}

split_indices make_splits(const dataset& ds, double target_fraction, double test_fraction, std::uint64_t seed,
                          std::uint64_t source_digest, std::span<const std::size_t> eligible) {
    if (!(target_fraction > 0.0) || !(test_fraction > 0.0) || !(target_fraction + test_fraction < 1.0))
        throw invalid_input("make_splits: need 0 < target_fraction, 0 < test_fraction, and their sum < 1");
    if (ds.num_classes == 0) throw invalid_input("make_splits: dataset declares zero classes");

    std::vector<index_list> by_class(ds.num_classes);
    auto add = [&](std::size_t i) {
        if (i >= ds.records.size()) throw invalid_input("make_splits: eligible index " + std::to_string(i) + " out of range");
        by_class[ds.records[i].label].push_back(i);
    };
    if (eligible.empty()) {
        for (std::size_t i = 0; i < ds.records.size(); ++i) add(i);
    } else {
        for (std::size_t i : eligible) add(i);
    }

    rng gen(seed);
    split_indices out;
    out.source_digest = source_digest;
    std::vector<index_list> train_pool(ds.num_classes);
    std::size_t pool_size = 0;
    for (std::uint32_t c = 0; c < ds.num_classes; ++c) {
        auto& members = by_class[c];
        std::sort(members.begin(), members.end());
        shuffle(members, gen);
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
        out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
        train_pool[c].assign(members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
        pool_size += train_pool[c].size();
    }

    const auto quota = static_cast<std::size_t>(
        std::llround(target_fraction * static_cast<double>(pool_size) / static_cast<double>(ds.num_classes)));
    if (quota == 0)
        throw sizing_error("make_splits: per-class target quota rounds to 0 (train pool " + std::to_string(pool_size) +
                           ", " + std::to_string(ds.num_classes) + " classes)");
    for (std::uint32_t c = 0; c < ds.num_classes; ++c) {
        const auto& pool = train_pool[c];
        if (pool.size() < quota)
            throw sizing_error("make_splits: class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                               " training samples, target quota is " + std::to_string(quota));
        out.target.insert(out.target.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota));
        out.auxiliary.insert(out.auxiliary.end(), pool.begin() + static_cast<std::ptrdiff_t>(quota), pool.end());
    }
    std::sort(out.target.begin(), out.target.end());
    std::sort(out.auxiliary.begin(), out.auxiliary.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<std::string> validate_splits(const dataset& ds, const split_indices& splits, std::uint64_t dataset_digest) {
    std::vector<std::string> problems;
    if (splits.source_digest != dataset_digest)
        problems.push_back("digest mismatch: splits reference " + digest_hex(splits.source_digest) + ", dataset is " +
                           digest_hex(dataset_digest));

    const std::pair<const char*, const index_list*> lists[] = {
        {"target", &splits.target}, {"auxiliary", &splits.auxiliary}, {"test", &splits.test}};
    for (const auto& [label, list] : lists) {
        for (std::size_t k = 0; k < list->size(); ++k) {
            if ((*list)[k] >= ds.records.size())
                problems.push_back(std::string(label) + " index " + std::to_string((*list)[k]) + " >= num_samples " +
                                   std::to_string(ds.records.size()));
            if (k > 0 && (*list)[k] <= (*list)[k - 1])
                problems.push_back(std::string(label) + " list not sorted-unique at position " + std::to_string(k) +
                                   " (index " + std::to_string((*list)[k]) + ")");
        }
    }
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            index_list shared;
            std::set_intersection(lists[a].second->begin(), lists[a].second->end(), lists[b].second->begin(),
                                  lists[b].second->end(), std::back_inserter(shared));
            for (std::size_t i : shared)
                problems.push_back("index " + std::to_string(i) + " appears in both " + lists[a].first + " and " +
                                   lists[b].first);
        }
    }
    return problems;
}

std::string splits_to_json(const split_indices& splits) {
    nlohmann::ordered_json j;
    j["source_digest"] = digest_hex(splits.source_digest);
    j["target"] = splits.target;
    j["auxiliary"] = splits.auxiliary;
    j["test"] = splits.test;
    return j.dump() + "\n";
}

split_indices splits_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    split_indices s;
    s.source_digest = parse_digest_hex(j.at("source_digest").get<std::string>());
    s.target = j.at("target").get<index_list>();
    s.auxiliary = j.at("auxiliary").get<index_list>();
    s.test = j.at("test").get<index_list>();
    return s;
}

void write_splits(const split_indices& splits, const std::filesystem::path& path) {
    write_file_atomic(path, splits_to_json(splits));
}

split_indices read_splits(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return splits_from_json(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<std::size_t> class_counts(const dataset& ds, std::span<const std::size_t> indices) {
    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (std::size_t i : indices) {
        if (i >= ds.records.size()) throw invalid_input("class_counts: index " + std::to_string(i) + " out of range");
        ++counts[ds.records[i].label];
    }
    return counts;
}

}  // namespace duse

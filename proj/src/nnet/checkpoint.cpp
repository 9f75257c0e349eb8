#include <bit>
#include <cstring>

#include "duse/nnet.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace duse::nnet {

namespace {

constexpr char checkpoint_magic[4] = {'A', 'M', 'R', 'M'};
constexpr std::uint32_t checkpoint_version = 1;
constexpr std::size_t checkpoint_header_size = 4 + 4 + 7 * 4 + 8;

template <class T>
void put(std::vector<std::byte>& out, T value) {
    const auto* p = reinterpret_cast<const std::byte*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(std::span<const std::byte> bytes, std::size_t offset) {
    T v;
    std::memcpy(&v, bytes.data() + offset, sizeof(T));
    return v;
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const model_state& model) {
    std::vector<std::byte> out;
    out.reserve(checkpoint_header_size + model.params.count() * sizeof(float));
    for (char c : checkpoint_magic) out.push_back(static_cast<std::byte>(c));
    put(out, checkpoint_version);
    const auto& a = model.arch;
    for (std::uint32_t v : {a.signal_len, a.conv1_filters, a.conv1_kernel, a.conv2_filters, a.conv2_kernel, a.hidden,
                            a.num_classes})
        put(out, v);
    put(out, model.init_seed);
    for (auto t : model.params.tensors()) {
        const auto* p = reinterpret_cast<const std::byte*>(t.data());
        out.insert(out.end(), p, p + t.size() * sizeof(float));
    }
    return out;
}

model_state decode_checkpoint(std::span<const std::byte> bytes) {
    if (bytes.size() < checkpoint_header_size) throw corrupt_file("truncated checkpoint header", bytes.size());
    if (std::memcmp(bytes.data(), checkpoint_magic, 4) != 0) throw corrupt_file("bad checkpoint magic", 0);
    if (get<std::uint32_t>(bytes, 4) != checkpoint_version) throw corrupt_file("unsupported checkpoint version", 4);
    model_state m;
    auto& a = m.arch;
    std::uint32_t* fields[] = {&a.signal_len, &a.conv1_filters, &a.conv1_kernel, &a.conv2_filters,
                               &a.conv2_kernel, &a.hidden,        &a.num_classes};
    for (std::size_t k = 0; k < 7; ++k) *fields[k] = get<std::uint32_t>(bytes, 8 + 4 * k);
    try {
        a.validate();
    } catch (const invalid_input& e) {
        throw corrupt_file(e.what(), 8);
    }
    m.init_seed = get<std::uint64_t>(bytes, 36);
    m.params = parameters::zeros(a);
    const std::size_t expected = checkpoint_header_size + m.params.count() * sizeof(float);
    if (bytes.size() != expected)
        throw corrupt_file("checkpoint length " + std::to_string(bytes.size()) + ", expected " + std::to_string(expected),
                           std::min(bytes.size(), expected));
    std::size_t off = checkpoint_header_size;
    for (auto t : m.params.tensors()) {
        std::memcpy(t.data(), bytes.data() + off, t.size() * sizeof(float));
        off += t.size() * sizeof(float);
    }
    return m;
}

void save_checkpoint(const model_state& model, const std::filesystem::path& path) {
    write_file_atomic(path, std::span<const std::byte>(encode_checkpoint(model)));
}

model_state load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

std::uint64_t model_digest(const model_state& model) {
    return fnv1a64(std::span<const std::byte>(encode_checkpoint(model)));
}

}  // namespace duse::nnet

#include "dsmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "dsmt/binio.hpp"

namespace dsmt {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'M', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ostringstream payload(std::ios::binary);
    write_u64(payload, ckpt.vocab_digest);
    write_f64(payload, ckpt.best_valid_mrr);
    write_u32(payload, ckpt.epoch);
    write_str(payload, ckpt.config_text);
    write_u32(payload, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, tensor] : ckpt.params) {
        write_str(payload, name);
        write_u32(payload, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t e : tensor.shape()) write_u64(payload, e);
        for (double v : tensor.values()) write_f64(payload, v);
    }
    const std::string bytes = payload.str();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    write_u32(os, ckpt.version);
    write_u64(os, bytes.size());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(path + ": not a checkpoint file (bad magic)");
    Checkpoint ckpt;
    ckpt.version = read_u32(is);
    if (ckpt.version != kVersion)
        throw CheckpointVersionError(path + ": unsupported checkpoint version " +
                                     std::to_string(ckpt.version) + ", expected " +
                                     std::to_string(kVersion));
    const std::uint64_t expected = read_u64(is);
    const auto payload_start = is.tellg();
    is.seekg(0, std::ios::end);
    const std::uint64_t actual = static_cast<std::uint64_t>(is.tellg() - payload_start);
    if (actual != expected)
        throw CheckpointTruncationError(path + ": payload is " + std::to_string(actual) +
                                        " bytes, expected " + std::to_string(expected));
    is.seekg(payload_start);

    ckpt.vocab_digest = read_u64(is);
    ckpt.best_valid_mrr = read_f64(is);
    ckpt.epoch = read_u32(is);
    ckpt.config_text = read_str(is);
    const std::uint32_t count = read_u32(is);
    ckpt.params.reserve(count);
    for (std::uint32_t p = 0; p < count; ++p) {
        std::string name = read_str(is);
        const std::uint32_t rank = read_u32(is);
        Shape shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape[r] = read_u64(is);
            numel *= shape[r];
        }
        std::vector<double> values(numel);
        for (std::size_t i = 0; i < numel; ++i) values[i] = read_f64(is);
        ckpt.params.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_digest) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.vocab_digest != expected_digest)
        throw CheckpointDigestError(path + ": vocabulary digest mismatch (checkpoint was trained "
                                           "on a different dataset)");
    return ckpt;
}

}  // namespace dsmt

#include "sve/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sve/data.hpp"
#include "sve/error.hpp"
#include "sve/rng.hpp"

namespace sve {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw FormatError(path + ": truncated checkpoint payload");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
};

} // namespace

void save_checkpoint(const EnsembleModel& model, const std::string& path,
                     const std::string& config_echo_json) {
    const std::string spec_json = model.spec.to_json();

    std::string body;
    put_u32(body, kCheckpointVersion);
    put_str(body, Rng::algorithm_id());
    put_u64(body, fnv1a64(spec_json.data(), spec_json.size()));
    put_str(body, spec_json);
    put_str(body, config_echo_json);

    const std::vector<NamedArray> arrays = model.named_arrays();
    put_u32(body, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        put_str(body, a.name);
        const Shape& s = a.tensor.shape();
        put_u32(body, static_cast<std::uint32_t>(s.size()));
        for (std::size_t d : s) put_u64(body, d);
        for (double v : a.tensor.data()) put_f64(body, v);
    }
    put_u64(body, fnv1a64(body.data(), body.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write("SVE1", 4);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("short write on checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("checkpoint not found: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 8 || bytes.compare(0, 4, "SVE1") != 0) {
        throw FormatError(path + ": bad checkpoint magic (expected \"SVE1\")");
    }
    const std::string body = bytes.substr(4, bytes.size() - 4 - 8);
    Reader tail{bytes, bytes.size() - 8, path};
    const std::uint64_t stored_sum = tail.u64();
    if (fnv1a64(body.data(), body.size()) != stored_sum) {
        throw FormatError(path + ": checksum mismatch, checkpoint is corrupt");
    }

    Reader r{body, 0, path};
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    LoadedCheckpoint loaded;
    loaded.rng_algorithm = r.str();
    const std::uint64_t spec_hash = r.u64();
    const std::string spec_json = r.str();
    if (fnv1a64(spec_json.data(), spec_json.size()) != spec_hash) {
        throw FormatError(path + ": model spec hash mismatch");
    }
    loaded.config_echo_json = r.str();

    loaded.model = build_model_shell(ModelSpec::from_json(spec_json));
    std::vector<NamedArray> arrays = loaded.model.named_arrays();

    const std::uint32_t n_arrays = r.u32();
    if (n_arrays != arrays.size()) {
        throw FormatError(path + ": checkpoint holds " + std::to_string(n_arrays) +
                          " arrays, model expects " + std::to_string(arrays.size()));
    }
    for (auto& slot : arrays) {
        const std::string name = r.str();
        if (name != slot.name) {
            throw FormatError(path + ": array order mismatch, got '" + name + "', expected '" +
                              slot.name + "'");
        }
        const std::uint32_t ndim = r.u32();
        Shape shape(ndim);
        for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<std::size_t>(r.u64());
        if (shape != slot.tensor.shape()) {
            throw FormatError(path + ": array '" + name + "' has shape " + shape_str(shape) +
                              ", expected " + shape_str(slot.tensor.shape()));
        }
        Tensor t = slot.tensor;
        auto& dst = t.mutable_data();
        for (double& v : dst) v = r.f64();
    }
    if (r.pos != body.size()) throw FormatError(path + ": trailing bytes after payload");
    return loaded;
}

} // namespace sve

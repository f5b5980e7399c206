#include "dtspike/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace dts {

namespace {

constexpr char kMagic[4] = {'D', 'T', 'S', 'S'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& s, float v) { put_u32(s, std::bit_cast<uint32_t>(v)); }

struct Reader {
    const std::string& s;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > s.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(size_t n) {
        need(n);
        std::string v = s.substr(pos, n);
        pos += n;
        return v;
    }
};

void atomic_write_file(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

std::string encode_checkpoint(uint64_t digest, const std::vector<CheckpointEntry>& entries) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, digest);
    put_u64(out, static_cast<uint64_t>(entries.size()));
    for (const auto& e : entries) {
        put_u32(out, static_cast<uint32_t>(e.name.size()));
        out += e.name;
        put_u32(out, static_cast<uint32_t>(e.shape.size()));
        for (int64_t d : e.shape) put_u64(out, static_cast<uint64_t>(d));
        for (float v : e.data) put_f32(out, v);
    }
    return out;
}

std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes, uint64_t* digest_out) {
    Reader r{bytes};
    if (r.str(4) != std::string(kMagic, 4)) throw FormatError("not a DTSS checkpoint (bad magic)");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const uint64_t digest = r.u64();
    if (digest_out) *digest_out = digest;
    const uint64_t count = r.u64();
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const uint32_t name_len = r.u32();
        e.name = r.str(name_len);
        const uint32_t rank = r.u32();
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            e.shape.push_back(static_cast<int64_t>(r.u64()));
            numel *= e.shape.back();
        }
        e.data.resize(static_cast<size_t>(numel));
        for (auto& v : e.data) v = r.f32();
        entries.push_back(std::move(e));
    }
    if (r.pos != bytes.size())
        throw FormatError("checkpoint has " + std::to_string(bytes.size() - r.pos) + " trailing bytes");
    return entries;
}

void save_checkpoint(const std::string& path, Model& model, const AdamW* opt) {
    std::vector<CheckpointEntry> entries;
    for (auto& [name, t] : model.state_tensors()) {
        CheckpointEntry e;
        e.name = name;
        e.shape = t.shape();
        e.data.assign(t.values().begin(), t.values().end());
        entries.push_back(std::move(e));
    }
    if (opt) {
        entries.push_back({"optim.step", {1}, {static_cast<float>(opt->step_count())}});
        const auto& params = opt->params();
        for (size_t i = 0; i < params.size(); ++i) {
            const std::string pname = params[i].label();
            entries.push_back({"optim.m." + pname, params[i].shape(), opt->moment1(i)});
            entries.push_back({"optim.v." + pname, params[i].shape(), opt->moment2(i)});
        }
    }
    atomic_write_file(path, encode_checkpoint(model.config().digest(), entries));
}

void load_checkpoint(const std::string& path, Model& model, AdamW* opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    uint64_t digest = 0;
    auto entries = decode_checkpoint(bytes, &digest);
    if (digest != model.config().digest())
        throw FormatError("checkpoint digest mismatch: file was written for a different architecture");

    std::map<std::string, Tensor> state;
    for (auto& [name, t] : model.state_tensors()) state.emplace(name, t);

    std::map<std::string, size_t> opt_index;
    if (opt)
        for (size_t i = 0; i < opt->params().size(); ++i) opt_index[opt->params()[i].label()] = i;

    size_t loaded = 0;
    for (const auto& e : entries) {
        if (e.name.starts_with("optim.")) {
            if (!opt) continue;
            if (e.name == "optim.step") {
                opt->set_step_count(static_cast<int64_t>(e.data.at(0)));
                continue;
            }
            const bool is_m = e.name.starts_with("optim.m.");
            const bool is_v = e.name.starts_with("optim.v.");
            if (!is_m && !is_v) throw FormatError("unknown optimizer entry '" + e.name + "'");
            const std::string pname = e.name.substr(8);
            auto it = opt_index.find(pname);
            if (it == opt_index.end())
                throw FormatError("optimizer entry '" + e.name + "' has no matching parameter");
            auto& slot = is_m ? opt->moment1(it->second) : opt->moment2(it->second);
            if (slot.size() != e.data.size())
                throw FormatError("optimizer entry '" + e.name + "' size mismatch");
            slot = e.data;
            continue;
        }
        auto it = state.find(e.name);
        if (it == state.end()) throw FormatError("checkpoint entry '" + e.name + "' is not a model tensor");
        if (it->second.shape() != e.shape)
            throw FormatError("checkpoint entry '" + e.name + "' shape " + shape_str(e.shape) +
                              " vs model " + shape_str(it->second.shape()));
        auto dst = it->second.values_mut();
        std::copy(e.data.begin(), e.data.end(), dst.begin());
        ++loaded;
    }
    if (loaded != state.size())
        throw FormatError("checkpoint covers " + std::to_string(loaded) + " of " +
                          std::to_string(state.size()) + " model tensors");
}

} // namespace dts

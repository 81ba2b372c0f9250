#include "chainhoi/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "chainhoi/errors.hpp"

namespace chainhoi {

namespace {
constexpr char kMagic[8] = {'C', 'H', 'A', 'I', 'N', 'H', 'O', 'I'};
constexpr uint32_t kVersion = 1;

// this code assumes a little-endian host, as do the file formats
void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
}  // namespace

void Checkpoint::put_tensor(const std::string& name, const Tensor& t) {
    if (index_.count(name)) throw ConfigError("duplicate checkpoint entry: " + name);
    CheckpointEntry e;
    e.name = name;
    e.dtype = 0;
    for (int d : t.shape()) e.dims.push_back(d);
    e.f64 = t.values();
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
}

void Checkpoint::put_bytes(const std::string& name, const std::string& data) {
    if (index_.count(name)) throw ConfigError("duplicate checkpoint entry: " + name);
    CheckpointEntry e;
    e.name = name;
    e.dtype = 1;
    e.dims = {static_cast<int64_t>(data.size())};
    e.bytes = data;
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
}

bool Checkpoint::has(const std::string& name) const { return index_.count(name) > 0; }

const CheckpointEntry& Checkpoint::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("checkpoint entry not found: " + name);
    return entries_[it->second];
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

void Checkpoint::load_into(const std::string& name, Tensor& t) const {
    const CheckpointEntry& e = entry(name);
    if (e.dtype != 0) throw ConfigError("checkpoint entry is not a tensor: " + name);
    if (static_cast<int64_t>(e.f64.size()) != t.numel())
        throw ConfigError("checkpoint shape mismatch for " + name);
    std::memcpy(t.data(), e.f64.data(), e.f64.size() * sizeof(double));
}

std::string Checkpoint::get_bytes(const std::string& name) const {
    const CheckpointEntry& e = entry(name);
    if (e.dtype != 1) throw ConfigError("checkpoint entry is not bytes: " + name);
    return e.bytes;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        write_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        os.put(static_cast<char>(e.dtype));
        write_u32(os, static_cast<uint32_t>(e.dims.size()));
        for (int64_t d : e.dims) write_u64(os, static_cast<uint64_t>(d));
    }
    for (const auto& e : entries_) {
        if (e.dtype == 0)
            os.write(reinterpret_cast<const char*>(e.f64.data()),
                     static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
        else
            os.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!os) throw DataError("short write to checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("bad checkpoint magic in " + path);
    uint32_t version = read_u32(is);
    if (version != kVersion) throw DataError("unsupported checkpoint version");
    uint32_t count = read_u32(is);
    Checkpoint ck;
    ck.entries_.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointEntry& e = ck.entries_[i];
        uint32_t name_len = read_u32(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        e.dtype = static_cast<uint8_t>(is.get());
        uint32_t ndim = read_u32(is);
        e.dims.resize(ndim);
        for (uint32_t d = 0; d < ndim; ++d) e.dims[d] = static_cast<int64_t>(read_u64(is));
        ck.index_[e.name] = i;
    }
    for (auto& e : ck.entries_) {
        int64_t n = 1;
        for (int64_t d : e.dims) n *= d;
        if (e.dtype == 0) {
            e.f64.resize(static_cast<size_t>(n));
            is.read(reinterpret_cast<char*>(e.f64.data()),
                    static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
        } else {
            e.bytes.resize(static_cast<size_t>(n));
            is.read(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
        }
    }
    if (!is) throw DataError("truncated checkpoint: " + path);
    return ck;
}

void Checkpoint::put_params(const ParamList& params) {
    for (const auto& p : params) put_tensor(p.name, p.tensor);
}

void Checkpoint::load_params(ParamList& params) const {
    for (auto& p : params) load_into(p.name, p.tensor);
}

}  // namespace chainhoi

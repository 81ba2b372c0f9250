#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chainhoi/modules.hpp"
#include "chainhoi/tensor.hpp"

namespace chainhoi {

// Single-file binary checkpoint. Layout, all little-endian:
//   magic "CHAINHOI" (8 bytes), version u32, entry count u32,
//   per entry: name (u32 length + bytes), dtype u8 (0 = f64 tensor,
//   1 = raw bytes), ndim u32, dims u64[ndim];
//   then payloads in manifest order (f64 row-major, or raw bytes).
struct CheckpointEntry {
    std::string name;
    uint8_t dtype = 0;
    std::vector<int64_t> dims;
    std::vector<double> f64;
    std::string bytes;
};

class Checkpoint {
public:
    void put_tensor(const std::string& name, const Tensor& t);
    void put_bytes(const std::string& name, const std::string& data);

    bool has(const std::string& name) const;
    const CheckpointEntry& entry(const std::string& name) const;
    std::vector<std::string> names() const;

    // copies stored values into the (already shaped) tensor
    void load_into(const std::string& name, Tensor& t) const;
    std::string get_bytes(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    // convenience for whole parameter lists
    void put_params(const ParamList& params);
    void load_params(ParamList& params) const;

private:
    std::vector<CheckpointEntry> entries_;
    std::map<std::string, size_t> index_;
};

}  // namespace chainhoi

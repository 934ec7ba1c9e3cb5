#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace threedpm {

/// 64-bit FNV-1a, incremental.
class Fnv1a64 {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::uint64_t digest() const { return h_; }
    std::string hex() const;

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);

/// Worker count from THREEDPM_THREADS (default 1, clamped to hardware concurrency).
int worker_count();

/// Runs body(i) for i in [0, n) over up to worker_count() threads with static contiguous
/// partitioning. Bodies must write only to disjoint, index-addressed outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Little-endian serialization helpers.
void put_u16(std::string& out, std::uint16_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);

class ByteReader {
public:
    ByteReader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    std::string bytes(std::size_t n);
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n);
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

}  // namespace threedpm

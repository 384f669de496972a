#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace bandloc {

/// Unknown magic or unsupported format version.
struct VersionMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File ended before the declared payload was complete.
struct TruncationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Payload bytes do not match the stored CRC.
struct ChecksumError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Container for binary artifacts (databases, model checkpoints).
///
/// Layout, all integers little-endian:
///   magic (8 bytes) | version u32 | meta_len u64 | meta (JSON, UTF-8)
///   | payload_len u64 | payload | crc32 u32
/// The CRC covers everything between the magic and the CRC field itself.
struct Envelope {
    std::string magic;   // exactly 8 characters
    std::uint32_t version = 0;
    std::string meta;    // JSON text
    std::vector<std::uint8_t> payload;
};

void write_envelope(const std::string& path, const Envelope& env);

/// Reads and verifies an envelope. Throws VersionMismatchError if the magic
/// does not match `expected_magic` or the version exceeds `max_version`,
/// TruncationError on premature EOF, ChecksumError on CRC mismatch.
Envelope read_envelope(const std::string& path, const std::string& expected_magic,
                       std::uint32_t max_version);

/// Append/read little-endian scalars and float64 arrays on byte buffers.
class PayloadWriter {
public:
    explicit PayloadWriter(std::vector<std::uint8_t>& buf) : buf_(buf) {}

    void put_u8(std::uint8_t v);
    void put_u32(std::uint32_t v);
    void put_u64(std::uint64_t v);
    void put_i64(std::int64_t v);
    void put_f64(double v);
    void put_f64_array(const double* data, size_t count);

private:
    std::vector<std::uint8_t>& buf_;
};

class PayloadReader {
public:
    explicit PayloadReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    std::uint8_t get_u8();
    std::uint32_t get_u32();
    std::uint64_t get_u64();
    std::int64_t get_i64();
    double get_f64();
    void get_f64_array(double* out, size_t count);
    bool at_end() const { return pos_ == buf_.size(); }

private:
    void need(size_t n) const;
    const std::vector<std::uint8_t>& buf_;
    size_t pos_ = 0;
};

/// FNV-1a 64-bit hash of a string, used for config fingerprints.
std::uint64_t fnv1a64_hash(const std::string& text);

} // namespace bandloc

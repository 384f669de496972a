#include "bandloc/serial.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

namespace bandloc {

namespace {

void append_bytes(std::vector<std::uint8_t>& buf, const void* data, size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf.insert(buf.end(), p, p + n);
}

template <typename T>
void append_le(std::vector<std::uint8_t>& buf, T v) {
    // host is little-endian on all supported targets; serialize byte-wise anyway
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    append_bytes(buf, bytes, sizeof(T));
}

std::uint32_t crc32_of(const std::uint8_t* data, size_t n) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    return static_cast<std::uint32_t>(::crc32(crc, data, static_cast<uInt>(n)));
}

} // namespace

void write_envelope(const std::string& path, const Envelope& env) {
    if (env.magic.size() != 8)
        throw std::invalid_argument("Envelope magic must be 8 bytes");

    std::vector<std::uint8_t> body; // everything after magic, before crc
    append_le<std::uint32_t>(body, env.version);
    append_le<std::uint64_t>(body, env.meta.size());
    append_bytes(body, env.meta.data(), env.meta.size());
    append_le<std::uint64_t>(body, env.payload.size());
    append_bytes(body, env.payload.data(), env.payload.size());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out.write(env.magic.data(), 8);
    out.write(reinterpret_cast<const char*>(body.data()),
              static_cast<std::streamsize>(body.size()));
    std::uint32_t crc = crc32_of(body.data(), body.size());
    char crc_bytes[4];
    std::memcpy(crc_bytes, &crc, 4);
    out.write(crc_bytes, 4);
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

Envelope read_envelope(const std::string& path, const std::string& expected_magic,
                       std::uint32_t max_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < 8 || std::memcmp(bytes.data(), expected_magic.data(), 8) != 0)
        throw VersionMismatchError("bad magic in " + path);

    if (bytes.size() < 8 + 4 + 8)
        throw TruncationError("truncated header in " + path);

    size_t pos = 8;
    auto read_le = [&](auto& v) {
        if (pos + sizeof(v) > bytes.size())
            throw TruncationError("truncated file: " + path);
        std::memcpy(&v, bytes.data() + pos, sizeof(v));
        pos += sizeof(v);
    };

    Envelope env;
    env.magic = expected_magic;
    read_le(env.version);
    if (env.version == 0 || env.version > max_version)
        throw VersionMismatchError("unsupported format version " +
                                   std::to_string(env.version) + " in " + path);

    std::uint64_t meta_len = 0;
    read_le(meta_len);
    if (pos + meta_len > bytes.size())
        throw TruncationError("truncated metadata in " + path);
    env.meta.assign(reinterpret_cast<const char*>(bytes.data() + pos),
                    static_cast<size_t>(meta_len));
    pos += meta_len;

    std::uint64_t payload_len = 0;
    read_le(payload_len);
    if (pos + payload_len + 4 > bytes.size())
        throw TruncationError("truncated payload in " + path);
    env.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + payload_len));
    pos += payload_len;

    std::uint32_t stored_crc = 0;
    read_le(stored_crc);
    std::uint32_t actual_crc = crc32_of(bytes.data() + 8, pos - 4 - 8);
    if (stored_crc != actual_crc)
        throw ChecksumError("checksum mismatch in " + path);

    return env;
}

void PayloadWriter::put_u8(std::uint8_t v) { buf_.push_back(v); }
void PayloadWriter::put_u32(std::uint32_t v) { append_le(buf_, v); }
void PayloadWriter::put_u64(std::uint64_t v) { append_le(buf_, v); }
void PayloadWriter::put_i64(std::int64_t v) { append_le(buf_, v); }
void PayloadWriter::put_f64(double v) { append_le(buf_, v); }

void PayloadWriter::put_f64_array(const double* data, size_t count) {
    append_bytes(buf_, data, count * sizeof(double));
}

void PayloadReader::need(size_t n) const {
    if (pos_ + n > buf_.size())
        throw TruncationError("payload shorter than expected");
}

std::uint8_t PayloadReader::get_u8() {
    need(1);
    return buf_[pos_++];
}

std::uint32_t PayloadReader::get_u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

std::uint64_t PayloadReader::get_u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

std::int64_t PayloadReader::get_i64() {
    need(8);
    std::int64_t v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

double PayloadReader::get_f64() {
    need(8);
    double v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

void PayloadReader::get_f64_array(double* out, size_t count) {
    need(count * sizeof(double));
    std::memcpy(out, buf_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
}

std::uint64_t fnv1a64_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace bandloc

#include "doctest.h"

#include "bandloc/serial.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace bandloc;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(static_cast<bool>(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

Envelope sample_envelope() {
    Envelope env;
    env.magic = "TESTMAG1";
    env.version = 3;
    env.meta = R"({"kind":"sample","n":7})";
    for (int i = 0; i < 256; ++i) env.payload.push_back(static_cast<std::uint8_t>(i));
    return env;
}

struct TempDir {
    fs::path dir;
    TempDir() : dir(fs::path("tmp_serial") / std::to_string(reinterpret_cast<std::uintptr_t>(this))) {
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string file(const std::string& name) const { return (dir / name).string(); }
};

} // namespace

TEST_CASE("envelope round-trip preserves every field") {
    TempDir tmp;
    const Envelope env = sample_envelope();
    write_envelope(tmp.file("rt.bin"), env);
    Envelope back = read_envelope(tmp.file("rt.bin"), "TESTMAG1", 3);
    CHECK(back.magic == env.magic);
    CHECK(back.version == env.version);
    CHECK(back.meta == env.meta);
    CHECK(back.payload == env.payload);
}

TEST_CASE("magic must be exactly 8 bytes on write") {
    TempDir tmp;
    Envelope env = sample_envelope();
    env.magic = "SHORT";
    CHECK_THROWS_AS(write_envelope(tmp.file("bad.bin"), env), std::invalid_argument);
}

TEST_CASE("wrong magic raises VersionMismatchError") {
    TempDir tmp;
    write_envelope(tmp.file("m.bin"), sample_envelope());

    SUBCASE("reader expects a different magic") {
        CHECK_THROWS_AS(read_envelope(tmp.file("m.bin"), "OTHERMAG", 3),
                        VersionMismatchError);
    }
    SUBCASE("magic corrupted on disk") {
        auto bytes = slurp(tmp.file("m.bin"));
        bytes[2] ^= 0xff;
        dump(tmp.file("m.bin"), bytes);
        CHECK_THROWS_AS(read_envelope(tmp.file("m.bin"), "TESTMAG1", 3),
                        VersionMismatchError);
    }
}

TEST_CASE("version above max_version raises VersionMismatchError") {
    TempDir tmp;
    write_envelope(tmp.file("v.bin"), sample_envelope()); // version 3
    CHECK_THROWS_AS(read_envelope(tmp.file("v.bin"), "TESTMAG1", 2), VersionMismatchError);
    CHECK_NOTHROW(read_envelope(tmp.file("v.bin"), "TESTMAG1", 3));
}

TEST_CASE("truncated files raise TruncationError") {
    TempDir tmp;
    write_envelope(tmp.file("t.bin"), sample_envelope());
    auto bytes = slurp(tmp.file("t.bin"));

    SUBCASE("payload cut short") {
        std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 40);
        dump(tmp.file("t.bin"), cut);
        CHECK_THROWS_AS(read_envelope(tmp.file("t.bin"), "TESTMAG1", 3), TruncationError);
    }
    SUBCASE("crc field missing") {
        std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 2);
        dump(tmp.file("t.bin"), cut);
        CHECK_THROWS_AS(read_envelope(tmp.file("t.bin"), "TESTMAG1", 3), TruncationError);
    }
    SUBCASE("header cut inside the meta length") {
        std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 10);
        dump(tmp.file("t.bin"), cut);
        CHECK_THROWS_AS(read_envelope(tmp.file("t.bin"), "TESTMAG1", 3), TruncationError);
    }
}

TEST_CASE("flipped payload byte raises ChecksumError") {
    TempDir tmp;
    write_envelope(tmp.file("c.bin"), sample_envelope());
    auto bytes = slurp(tmp.file("c.bin"));
    bytes[bytes.size() - 20] ^= 0x01; // inside the payload, before the crc
    dump(tmp.file("c.bin"), bytes);
    CHECK_THROWS_AS(read_envelope(tmp.file("c.bin"), "TESTMAG1", 3), ChecksumError);
}

TEST_CASE("flipped meta byte raises ChecksumError") {
    TempDir tmp;
    write_envelope(tmp.file("cm.bin"), sample_envelope());
    auto bytes = slurp(tmp.file("cm.bin"));
    bytes[8 + 4 + 8 + 2] ^= 0x10; // inside the JSON meta text
    dump(tmp.file("cm.bin"), bytes);
    CHECK_THROWS_AS(read_envelope(tmp.file("cm.bin"), "TESTMAG1", 3), ChecksumError);
}

TEST_CASE("payload scalars round-trip bit-exactly") {
    std::vector<std::uint8_t> buf;
    PayloadWriter w(buf);
    w.put_u8(0xab);
    w.put_u32(0xdeadbeefu);
    w.put_u64(0x0123456789abcdefULL);
    w.put_i64(-42);
    const double values[] = {0.0, -0.0, 1.0 / 3.0, 2.2250738585072014e-308, 1e308,
                             -3.141592653589793};
    w.put_f64(values[5]);
    w.put_f64_array(values, 5);

    PayloadReader r(buf);
    CHECK(r.get_u8() == 0xab);
    CHECK(r.get_u32() == 0xdeadbeefu);
    CHECK(r.get_u64() == 0x0123456789abcdefULL);
    CHECK(r.get_i64() == -42);
    double back = r.get_f64();
    CHECK(std::memcmp(&back, &values[5], 8) == 0);
    double arr[5];
    r.get_f64_array(arr, 5);
    CHECK(std::memcmp(arr, values, 5 * sizeof(double)) == 0);
    CHECK(r.at_end());
}

TEST_CASE("reading past the payload end raises TruncationError") {
    std::vector<std::uint8_t> buf;
    PayloadWriter w(buf);
    w.put_u32(7);
    PayloadReader r(buf);
    CHECK(r.get_u32() == 7);
    CHECK_THROWS_AS(r.get_u8(), TruncationError);
    PayloadReader r2(buf);
    CHECK_THROWS_AS(r2.get_u64(), TruncationError);
}

TEST_CASE("fnv1a64_hash matches the reference vectors") {
    // Published FNV-1a 64-bit test vectors.
    CHECK(fnv1a64_hash("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64_hash("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64_hash("foobar") == 0x85944171f73967e8ULL);
    CHECK(fnv1a64_hash("config") == fnv1a64_hash("config"));
    CHECK(fnv1a64_hash("config a") != fnv1a64_hash("config b"));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bcgan/checkpoint.hpp"

using namespace bcgan;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::vector<char> read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(bool(is));
    return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    REQUIRE(bool(os));
    os.write(bytes.data(), std::streamsize(bytes.size()));
}

struct Buffers {
    std::vector<float> w = {1.0f, -2.0f, 3.5f, 0.25f, 1e-20f, 4096.0f};
    std::vector<float> b = {0.5f, -0.5f};

    std::vector<NamedBufferRef> refs() {
        return {{"net.w", {3, 2}, w.data(), int64_t(w.size())},
                {"net.b", {2}, b.data(), int64_t(b.size())}};
    }
};

}  // namespace

TEST_CASE("checkpoints round-trip exactly") {
    Buffers src;
    std::string path = temp_path("bcgan_ckpt_roundtrip.bcgw");
    save_checkpoint(path, src.refs());

    Buffers dst;
    dst.w.assign(6, 0.0f);
    dst.b.assign(2, 0.0f);
    auto refs = dst.refs();
    load_checkpoint(path, refs);
    CHECK(std::memcmp(dst.w.data(), src.w.data(), src.w.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(dst.b.data(), src.b.data(), src.b.size() * sizeof(float)) == 0);
}

TEST_CASE("file layout starts with the magic and tensor count") {
    Buffers src;
    std::string path = temp_path("bcgan_ckpt_magic.bcgw");
    save_checkpoint(path, src.refs());
    auto bytes = read_bytes(path);
    REQUIRE(bytes.size() > 9);
    CHECK(std::string(bytes.begin(), bytes.begin() + 5) == "BCGW1");
    CHECK(uint8_t(bytes[5]) == 2);  // two tensors, little-endian u32
    CHECK(uint8_t(bytes[6]) == 0);
}

TEST_CASE("read_checkpoint exposes names, extents and payloads") {
    Buffers src;
    std::string path = temp_path("bcgan_ckpt_read.bcgw");
    save_checkpoint(path, src.refs());
    auto named = read_checkpoint(path);
    REQUIRE(named.size() == 2);
    CHECK(named[0].name == "net.w");
    CHECK(named[0].extents == std::vector<uint32_t>{3, 2});
    CHECK(named[0].data == src.w);
    CHECK(named[1].name == "net.b");
    CHECK(named[1].data == src.b);
}

TEST_CASE("loading verifies shape, coverage and exact name set") {
    Buffers src;
    std::string path = temp_path("bcgan_ckpt_strict.bcgw");
    save_checkpoint(path, src.refs());

    SUBCASE("extent mismatch") {
        Buffers dst;
        auto refs = dst.refs();
        refs[0].extents = {2, 3};  // transposed declaration
        try {
            load_checkpoint(path, refs);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(std::string(e.what()).find("net.w") != std::string::npos);
        }
    }
    SUBCASE("requested name missing from the file") {
        Buffers dst;
        auto refs = dst.refs();
        refs[1].name = "net.bias";
        CHECK_THROWS_AS(load_checkpoint(path, refs), CheckpointError);
    }
    SUBCASE("file carries a name the caller did not request") {
        Buffers dst;
        auto refs = dst.refs();
        refs.pop_back();
        CHECK_THROWS_AS(load_checkpoint(path, refs), CheckpointError);
    }
}

TEST_CASE("reader rejects corrupt containers") {
    Buffers src;
    std::string good = temp_path("bcgan_ckpt_good.bcgw");
    save_checkpoint(good, src.refs());
    auto bytes = read_bytes(good);
    std::string bad = temp_path("bcgan_ckpt_bad.bcgw");

    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = 'Z';
        write_bytes(bad, b);
        CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
    }
    SUBCASE("truncated payload") {
        auto b = bytes;
        b.resize(b.size() - 3);
        write_bytes(bad, b);
        CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
    }
    SUBCASE("trailing bytes") {
        auto b = bytes;
        b.push_back('\x7f');
        write_bytes(bad, b);
        CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_checkpoint(temp_path("bcgan_ckpt_never.bcgw")),
                        CheckpointError);
    }
}

TEST_CASE("files with duplicate tensor names are rejected on load") {
    std::vector<float> a{1.0f}, b{2.0f};
    std::vector<NamedBufferRef> dup{{"same", {1}, a.data(), 1}, {"same", {1}, b.data(), 1}};
    std::string path = temp_path("bcgan_ckpt_dup.bcgw");
    save_checkpoint(path, dup);  // the writer is name-agnostic

    std::vector<float> dst{0.0f};
    std::vector<NamedBufferRef> refs{{"same", {1}, dst.data(), 1}};
    try {
        load_checkpoint(path, refs);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
}

TEST_CASE("saving rejects extents that disagree with the element count") {
    std::vector<float> a{1.0f, 2.0f, 3.0f};
    std::vector<NamedBufferRef> refs{{"w", {2, 2}, a.data(), 3}};
    CHECK_THROWS_AS(save_checkpoint(temp_path("bcgan_ckpt_extents.bcgw"), refs), CheckpointError);
}

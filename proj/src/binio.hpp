#pragma once

// Internal binary I/O helpers shared by the PLRF/PLRK/PLSV/PLMK/PLGM
// serializers. All formats are little-endian; this code assumes a
// little-endian host (checked at compile time below).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pillar/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace pillar::detail {

class BinReader {
public:
    BinReader(const std::filesystem::path& path) : path_(path.string()), in_(path, std::ios::binary) {
        if (!in_) raise(errc::io_failure, path_ + ": cannot open for reading");
    }

    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

    void read_bytes(void* dst, std::size_t count, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in_.gcount()) != count) {
            raise(errc::truncated_payload,
                  path_ + ": " + what + " ends at byte " + std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())) +
                      ", expected " + std::to_string(offset_ + count));
        }
        offset_ += count;
    }

    void expect_magic(const char magic[4]) {
        char got[4] = {};
        const std::size_t at = offset_;
        read_bytes(got, 4, "magic");
        if (std::memcmp(got, magic, 4) != 0) {
            raise(errc::bad_magic, path_ + ": bad magic at byte " + std::to_string(at) + ", expected '" +
                                       std::string(magic, 4) + "'");
        }
    }

    std::uint32_t read_u32(const char* what) {
        std::uint32_t v = 0;
        read_bytes(&v, sizeof v, what);
        return v;
    }

    std::uint64_t read_u64(const char* what) {
        std::uint64_t v = 0;
        read_bytes(&v, sizeof v, what);
        return v;
    }

    void expect_version(std::uint32_t supported) {
        const std::size_t at = offset_;
        const std::uint32_t v = read_u32("version");
        if (v != supported) {
            raise(errc::unsupported_version, path_ + ": version " + std::to_string(v) + " at byte " +
                                                 std::to_string(at) + ", supported " + std::to_string(supported));
        }
    }

    template <typename T>
    void read_array(std::vector<T>& out, std::size_t count, const char* what) {
        out.resize(count);
        if (count > 0) read_bytes(out.data(), count * sizeof(T), what);
    }

    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
};

class BinWriter {
public:
    BinWriter(const std::filesystem::path& path)
        : path_(path.string()), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) raise(errc::io_failure, path_ + ": cannot open for writing");
    }

    void write_bytes(const void* src, std::size_t count) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(count));
        if (!out_) raise(errc::io_failure, path_ + ": write failed");
    }

    void write_magic(const char magic[4]) { write_bytes(magic, 4); }
    void write_u32(std::uint32_t v) { write_bytes(&v, sizeof v); }
    void write_u64(std::uint64_t v) { write_bytes(&v, sizeof v); }

    template <typename T>
    void write_array(const std::vector<T>& v) {
        if (!v.empty()) write_bytes(v.data(), v.size() * sizeof(T));
    }

    void close() {
        out_.close();
        if (!out_) raise(errc::io_failure, path_ + ": close failed");
    }

private:
    std::string path_;
    std::ofstream out_;
};

}  // namespace pillar::detail

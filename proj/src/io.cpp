#include "gridad/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gridad::io {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h) noexcept {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) noexcept {
    return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void append_f32le(std::vector<unsigned char>& out, std::span<const float> values) {
    out.reserve(out.size() + 4 * values.size());
    for (float f : values) {
        const auto u = std::bit_cast<std::uint32_t>(f);
        out.push_back(static_cast<unsigned char>(u & 0xff));
        out.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
        out.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
        out.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
    }
}

float read_f32le(const unsigned char* p) noexcept {
    const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
}

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, std::span<const unsigned char> bytes) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    write_file(p, std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void keep_heap_resident() noexcept {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

}  // namespace gridad::io

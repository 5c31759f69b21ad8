#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gridad::io {

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(const std::string& s) noexcept;
std::string hex64(std::uint64_t v);

/// Appends IEEE-754 binary32 values as little-endian bytes.
void append_f32le(std::vector<unsigned char>& out, std::span<const float> values);
float read_f32le(const unsigned char* p) noexcept;

std::vector<unsigned char> read_file(const std::filesystem::path& p);
/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& p, std::span<const unsigned char> bytes);
void write_file(const std::filesystem::path& p, const std::string& text);

/// Keeps large freed blocks in the heap instead of returning them to the
/// OS. Training allocates and frees same-sized buffers every step; without
/// this each one costs fresh page faults. No-op outside glibc.
void keep_heap_resident() noexcept;

}  // namespace gridad::io

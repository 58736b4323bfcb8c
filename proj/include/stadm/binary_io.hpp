#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <iosfwd>
#include <string>

namespace stadm {

// Little-endian primitives for the on-disk formats, plus atomic file output
// (write to a temp file in the same directory, rename over the target).

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* data, std::size_t n);
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void str16(const std::string& s);  // u16 length + bytes

private:
    std::ostream& out_;
};

class BinaryReader {
public:
    /// `context` names the file section in truncation errors.
    explicit BinaryReader(std::istream& in) : in_(in) {}

    void bytes(void* data, std::size_t n, const char* context);
    std::uint16_t u16(const char* context);
    std::uint32_t u32(const char* context);
    std::uint64_t u64(const char* context);
    float f32(const char* context);
    double f64(const char* context);
    std::string str16(const char* context);

private:
    std::istream& in_;
};

/// Writes via `fill(stream)` into a temp file next to `path`, then renames it
/// into place. On any failure the temp file is removed and nothing appears at
/// the target path.
void atomic_write_file(const std::string& path, const std::function<void(std::ostream&)>& fill);

}  // namespace stadm

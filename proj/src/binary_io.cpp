#include "stadm/binary_io.hpp"

#include <unistd.h>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "stadm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; byte swapping is not implemented");

namespace stadm {

void BinaryWriter::bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}
void BinaryWriter::u16(std::uint16_t v) { bytes(&v, sizeof v); }
void BinaryWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void BinaryWriter::f32(float v) { bytes(&v, sizeof v); }
void BinaryWriter::f64(double v) { bytes(&v, sizeof v); }
void BinaryWriter::str16(const std::string& s) {
    if (s.size() > UINT16_MAX) throw ParseError("string too long for str16 field");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinaryReader::bytes(void* data, std::size_t n, const char* context) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
        throw ParseError(std::string("file truncated while reading ") + context);
}
std::uint16_t BinaryReader::u16(const char* context) {
    std::uint16_t v;
    bytes(&v, sizeof v, context);
    return v;
}
std::uint32_t BinaryReader::u32(const char* context) {
    std::uint32_t v;
    bytes(&v, sizeof v, context);
    return v;
}
std::uint64_t BinaryReader::u64(const char* context) {
    std::uint64_t v;
    bytes(&v, sizeof v, context);
    return v;
}
float BinaryReader::f32(const char* context) {
    float v;
    bytes(&v, sizeof v, context);
    return v;
}
double BinaryReader::f64(const char* context) {
    double v;
    bytes(&v, sizeof v, context);
    return v;
}
std::string BinaryReader::str16(const char* context) {
    const std::uint16_t n = u16(context);
    std::string s(n, '\0');
    if (n > 0) bytes(s.data(), n, context);
    return s;
}

void atomic_write_file(const std::string& path,
                       const std::function<void(std::ostream&)>& fill) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path dir = target.parent_path().empty() ? fs::path(".") : target.parent_path();
    fs::path tmp = dir / (target.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
        try {
            fill(out);
        } catch (...) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw;
        }
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot move temp file into place at " + path);
    }
}

}  // namespace stadm

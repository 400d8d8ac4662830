#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmeter/errors.hpp"

namespace ctxmeter {

// All binary formats in this project are little-endian. The readers track the
// byte offset so format errors can name the exact position.

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size, std::string source)
        : data_(data), size_(size), source_(std::move(source)) {}

    size_t offset() const { return offset_; }
    size_t remaining() const { return size_ - offset_; }

    uint32_t read_u32();
    uint64_t read_u64();
    float read_f32();
    double read_f64();
    std::string read_bytes(size_t count);
    void expect_magic(const char magic[4]);
    void expect_end();

private:
    void need(size_t count);

    const uint8_t* data_;
    size_t size_;
    size_t offset_ = 0;
    std::string source_;
};

class ByteWriter {
public:
    void write_u32(uint32_t v);
    void write_u64(uint64_t v);
    void write_f32(float v);
    void write_f64(double v);
    void write_bytes(const void* data, size_t count);
    void write_magic(const char magic[4]) { write_bytes(magic, 4); }

    const std::vector<uint8_t>& buffer() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

std::vector<uint8_t> read_file(const std::string& path);
std::string read_text_file(const std::string& path);

// Write-to-temp-then-rename; partially written artifacts never appear under
// the final name.
void atomic_write_file(const std::string& path, const void* data, size_t size);
void atomic_write_file(const std::string& path, const std::string& text);

uint64_t fnv1a64(const void* data, size_t size);
uint64_t fnv1a64(const std::string& text);
std::string to_hex(uint64_t value);
uint64_t file_checksum(const std::string& path);

// Shortest decimal form that round-trips the double exactly ("%.17g" with
// trailing zero trimming left to the formatter); deterministic across runs.
std::string format_double(double v);

}  // namespace ctxmeter

#include "ctxmeter/io_util.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace ctxmeter {

void ByteReader::need(size_t count) {
    if (offset_ + count > size_) {
        throw FormatError(source_ + ": truncated payload, need " + std::to_string(count) +
                              " more bytes",
                          offset_);
    }
}

uint32_t ByteReader::read_u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, data_ + offset_, 4);
    offset_ += 4;
    return v;
}

uint64_t ByteReader::read_u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, data_ + offset_, 8);
    offset_ += 8;
    return v;
}

float ByteReader::read_f32() {
    need(4);
    float v;
    std::memcpy(&v, data_ + offset_, 4);
    offset_ += 4;
    return v;
}

double ByteReader::read_f64() {
    need(8);
    double v;
    std::memcpy(&v, data_ + offset_, 8);
    offset_ += 8;
    return v;
}

std::string ByteReader::read_bytes(size_t count) {
    need(count);
    std::string s(reinterpret_cast<const char*>(data_ + offset_), count);
    offset_ += count;
    return s;
}

void ByteReader::expect_magic(const char magic[4]) {
    const size_t at = offset_;
    const std::string got = read_bytes(4);
    if (std::memcmp(got.data(), magic, 4) != 0) {
        throw FormatError(source_ + ": bad magic, expected '" + std::string(magic, 4) +
                              "' got '" + got + "'",
                          at);
    }
}

void ByteReader::expect_end() {
    if (offset_ != size_) {
        throw FormatError(source_ + ": " + std::to_string(size_ - offset_) +
                              " trailing bytes after payload",
                          offset_);
    }
}

void ByteWriter::write_u32(uint32_t v) { write_bytes(&v, 4); }
void ByteWriter::write_u64(uint64_t v) { write_bytes(&v, 8); }
void ByteWriter::write_f32(float v) { write_bytes(&v, 4); }
void ByteWriter::write_f64(double v) { write_bytes(&v, 8); }

void ByteWriter::write_bytes(const void* data, size_t count) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + count);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError(path);
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> data(static_cast<size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(data.data()), size);
    if (!in) throw std::runtime_error("failed reading " + path);
    return data;
}

std::string read_text_file(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

void atomic_write_file(const std::string& path, const void* data, size_t size) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path() && !target.parent_path().empty()) {
        fs::create_directories(target.parent_path());
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        out.flush();
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    fs::rename(tmp, target);
}

void atomic_write_file(const std::string& path, const std::string& text) {
    atomic_write_file(path, text.data(), text.size());
}

uint64_t fnv1a64(const void* data, size_t size) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64(const std::string& text) { return fnv1a64(text.data(), text.size()); }

std::string to_hex(uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

uint64_t file_checksum(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    return fnv1a64(bytes.data(), bytes.size());
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // Prefer the shortest representation that still round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char trial[40];
        std::snprintf(trial, sizeof(trial), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(trial, "%lf", &back);
        if (back == v) return std::string(trial);
    }
    return std::string(buf);
}

}  // namespace ctxmeter

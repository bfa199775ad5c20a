// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/io.hpp"
#include "maskhash/error.hpp"

#include <cstdio>
#include <cstring>

namespace maskhash {

std::string format_g12(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.12g", value);
    return buffer;
}

BinaryWriter::BinaryWriter(const std::string& path)
    : _path(path), _out(path, std::ios::binary) {
    if (!_out) {
        throw Error::data("cannot open '" + path + "' for writing");
    }
}

void BinaryWriter::magic(const char tag[4]) {
    _out.write(tag, 4);
}

void BinaryWriter::u32(uint32_t value) {
    unsigned char bytes[4];
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    }
    _out.write(reinterpret_cast<const char*>(bytes), 4);
}

void BinaryWriter::u64(uint64_t value) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    }
    _out.write(reinterpret_cast<const char*>(bytes), 8);
}

void BinaryWriter::f32(float value) {
    uint32_t bits;
    static_assert(sizeof(bits) == sizeof(value));
    std::memcpy(&bits, &value, sizeof(bits));
    u32(bits);
}

void BinaryWriter::f32_array(const float* values, size_t count) {
    for (size_t i = 0; i < count; ++i) {
        f32(values[i]);
    }
}

void BinaryWriter::close() {
    _out.flush();
    if (!_out) {
        throw Error::data("write to '" + _path + "' failed");
    }
    _out.close();
}

BinaryReader::BinaryReader(const std::string& path)
    : _path(path), _in(path, std::ios::binary) {
    if (!_in) {
        throw Error::data("cannot open '" + path + "' for reading");
    }
}

void BinaryReader::fill(unsigned char* buffer, size_t count) {
    _in.read(reinterpret_cast<char*>(buffer), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(_in.gcount()) != count) {
        throw Error::data("'" + _path + "' truncated at byte " + std::to_string(_offset));
    }
    _offset += count;
}

void BinaryReader::expect_magic(const char tag[4]) {
    unsigned char bytes[4];
    fill(bytes, 4);
    if (std::memcmp(bytes, tag, 4) != 0) {
        throw Error::data("'" + _path + "' has wrong magic, expected " + std::string(tag, 4));
    }
}

uint32_t BinaryReader::u32() {
    unsigned char bytes[4];
    fill(bytes, 4);
    uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
        value |= static_cast<uint32_t>(bytes[i]) << (8 * i);
    }
    return value;
}

uint64_t BinaryReader::u64() {
    unsigned char bytes[8];
    fill(bytes, 8);
    uint64_t value = 0;
    for (int i = 0; i < 8; ++i) {
        value |= static_cast<uint64_t>(bytes[i]) << (8 * i);
    }
    return value;
}

float BinaryReader::f32() {
    const uint32_t bits = u32();
    float value;
    std::memcpy(&value, &bits, sizeof(value));
    return value;
}

void BinaryReader::f32_array(float* values, size_t count) {
    for (size_t i = 0; i < count; ++i) {
        values[i] = f32();
    }
}

void BinaryReader::expect_eof() {
    if (_in.peek() != std::ifstream::traits_type::eof()) {
        throw Error::data("'" + _path + "' has trailing bytes after byte " + std::to_string(_offset));
    }
}

} // namespace maskhash

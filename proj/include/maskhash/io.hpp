// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace maskhash {

// Shortest round-trippable-enough decimal form used by every CSV emitter;
// %.12g keeps doubles stable across runs without locale surprises.
std::string format_g12(double value);

// Little-endian binary stream helpers shared by all file formats. Multi-byte
// values are assembled bytewise so files are identical on any host order.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path);

    void magic(const char tag[4]);
    void u32(uint32_t value);
    void u64(uint64_t value);
    void f32(float value);
    void f32_array(const float* values, size_t count);

    void close();
    const std::string& path() const { return _path; }

private:
    std::string _path;
    std::ofstream _out;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path);

    void expect_magic(const char tag[4]);
    uint32_t u32();
    uint64_t u64();
    float f32();
    void f32_array(float* values, size_t count);

    // Fails if any payload bytes remain; catches writes truncated mid-record and
    // trailing garbage alike.
    void expect_eof();

    const std::string& path() const { return _path; }

private:
    void fill(unsigned char* buffer, size_t count);

    std::string _path;
    std::ifstream _in;
    uint64_t _offset = 0;
};

} // namespace maskhash

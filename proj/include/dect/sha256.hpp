#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dect {

// FIPS 180-4 SHA-256. Incremental use: update() any number of times, then
// digest()/hex_digest() once; further updates require a new instance.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    std::array<std::uint8_t, 32> digest();
    std::string hex_digest();

private:
    void process_block(const std::uint8_t* p);

    std::array<std::uint32_t, 8> state_;
    std::uint64_t total_bytes_ = 0;
    std::array<std::uint8_t, 64> buffer_{};
    std::size_t buffered_ = 0;
    bool finished_ = false;
};

std::string sha256_hex(const std::string& data);
std::string sha256_file_hex(const std::string& path);

}  // namespace dect

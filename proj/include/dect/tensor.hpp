#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dect/common.hpp"

namespace dect {

// Dense row-major float64 array. The last dim varies fastest.
struct DenseArray {
    std::vector<std::size_t> dims;
    std::vector<double> data;

    DenseArray() = default;
    DenseArray(std::vector<std::size_t> d, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return dims.size(); }

    double& at2(std::size_t r, std::size_t c) { return data[r * dims[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * dims[1] + c]; }
};

std::size_t checked_element_count(const std::vector<std::size_t>& dims,
                                  std::size_t element_cap);

// Cap on element count accepted from file headers; guards malformed dims.
inline constexpr std::size_t kDefaultElementCap = std::size_t{1} << 28;

// Binary format: "DECT" | u32 version=1 | u32 ndim | u32 dims[ndim] | f64 payload.
// All fields little-endian, payload row-major. Round-trips bit-exactly.
void write_array(const std::string& path, const DenseArray& a);
DenseArray read_array(const std::string& path,
                      std::size_t element_cap = kDefaultElementCap);

// Comma-separated numeric text. '#' lines and blank lines are skipped.
// Accepts \n and \r\n endings. Result has dims {rows, expected_columns}.
DenseArray read_csv_table(const std::string& path, std::size_t expected_columns);

// Writes rows with enough digits that re-reading reproduces every value exactly.
void write_csv_table(const std::string& path, const DenseArray& table,
                     const std::string& header_comment = "");

}  // namespace dect

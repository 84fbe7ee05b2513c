#include "dect/tensor.hpp"

#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace dect {

DenseArray::DenseArray(std::vector<std::size_t> d, double fill) : dims(std::move(d)) {
    std::size_t n = checked_element_count(dims, kDefaultElementCap);
    data.assign(n, fill);
}

std::size_t checked_element_count(const std::vector<std::size_t>& dims,
                                  std::size_t element_cap) {
    if (dims.empty())
        throw Error(ErrorKind::config, "array header: ndim must be >= 1", IoCode::bad_header);
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0)
            throw Error(ErrorKind::config, "array header: zero extent", IoCode::bad_header);
        if (d > element_cap / n)
            throw Error(ErrorKind::config, "array header: element count exceeds cap",
                        IoCode::too_large);
        n *= d;
    }
    return n;
}

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f64_le(std::string& out, double x) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i)
        bits = (bits << 8) | p[i];
    return std::bit_cast<double>(bits);
}

constexpr char kMagic[4] = {'D', 'E', 'C', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void write_array(const std::string& path, const DenseArray& a) {
    if (a.dims.empty())
        throw Error(ErrorKind::config, "write_array: ndim must be >= 1", IoCode::bad_header);
    std::size_t n = checked_element_count(a.dims, std::numeric_limits<std::size_t>::max());
    if (n != a.data.size())
        throw Error(ErrorKind::mismatch, "write_array: data length does not match dims");

    std::string buf;
    buf.reserve(16 + 4 * a.dims.size() + 8 * a.data.size());
    buf.append(kMagic, 4);
    put_u32_le(buf, kFormatVersion);
    put_u32_le(buf, static_cast<std::uint32_t>(a.dims.size()));
    for (std::size_t d : a.dims) {
        if (d > std::numeric_limits<std::uint32_t>::max())
            throw Error(ErrorKind::config, "write_array: extent exceeds u32", IoCode::too_large);
        put_u32_le(buf, static_cast<std::uint32_t>(d));
    }
    for (double x : a.data)
        put_f64_le(buf, x);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw Error(ErrorKind::io, "write_array: cannot open '" + path + "'", IoCode::open_failed);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f)
        throw Error(ErrorKind::io, "write_array: write failed for '" + path + "'",
                    IoCode::write_failed);
}

DenseArray read_array(const std::string& path, std::size_t element_cap) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error(ErrorKind::io, "read_array: cannot open '" + path + "'", IoCode::open_failed);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    const std::size_t len = raw.size();

    if (len < 4 || std::memcmp(p, kMagic, 4) != 0)
        throw Error(ErrorKind::io, "read_array: bad magic in '" + path + "'",
                    IoCode::bad_magic);
    if (len < 12)
        throw Error(ErrorKind::io, "read_array: truncated header in '" + path + "'",
                    IoCode::truncated);
    std::uint32_t version = get_u32_le(p + 4);
    if (version != kFormatVersion)
        throw Error(ErrorKind::io,
                    "read_array: unsupported format version " + std::to_string(version) +
                        " in '" + path + "'",
                    IoCode::bad_version);
    std::uint32_t ndim = get_u32_le(p + 8);
    if (ndim == 0 || ndim > 8)
        throw Error(ErrorKind::io, "read_array: bad ndim in '" + path + "'",
                    IoCode::bad_header);
    if (len < 12 + 4ull * ndim)
        throw Error(ErrorKind::io, "read_array: truncated dims in '" + path + "'",
                    IoCode::truncated);

    DenseArray a;
    a.dims.resize(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i)
        a.dims[i] = get_u32_le(p + 12 + 4 * i);
    std::size_t n = 0;
    try {
        n = checked_element_count(a.dims, element_cap);
    } catch (const Error&) {
        // The oversized shape came from the file, so surface it as a file problem.
        throw Error(ErrorKind::io, "read_array: element count exceeds cap in '" + path + "'",
                    IoCode::too_large);
    }

    std::size_t payload_off = 12 + 4ull * ndim;
    if (len != payload_off + 8 * n)
        throw Error(ErrorKind::io, "read_array: truncated payload in '" + path + "'",
                    IoCode::truncated);
    a.data.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        a.data[i] = get_f64_le(p + payload_off + 8 * i);
    return a;
}

namespace {

bool parse_double(const std::string& cell, double& out) {
    const char* s = cell.c_str();
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s, &end);
    if (end == s)
        return false;
    while (*end == ' ' || *end == '\t')
        ++end;
    return *end == '\0';
}

}  // namespace

DenseArray read_csv_table(const std::string& path, std::size_t expected_columns) {
    if (expected_columns == 0)
        throw Error(ErrorKind::config, "read_csv_table: expected_columns must be > 0");
    std::ifstream f(path);
    if (!f)
        throw Error(ErrorKind::io, "read_csv_table: cannot open '" + path + "'",
                    IoCode::open_failed);

    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#')
            continue;
        std::size_t ncols = 0;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string cell = line.substr(start, comma == std::string::npos
                                                      ? std::string::npos
                                                      : comma - start);
            double v;
            if (!parse_double(cell, v))
                throw Error(ErrorKind::io,
                            path + ":" + std::to_string(line_no) + ": not a number: '" + cell +
                                "'",
                            IoCode::bad_number);
            ++ncols;
            if (ncols > expected_columns)
                throw Error(ErrorKind::io,
                            path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(expected_columns) + " columns",
                            IoCode::ragged_row);
            values.push_back(v);
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
        if (ncols != expected_columns)
            throw Error(ErrorKind::io,
                        path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(expected_columns) + " columns, got " +
                            std::to_string(ncols),
                        IoCode::ragged_row);
        ++rows;
    }
    if (rows == 0)
        throw Error(ErrorKind::io, "read_csv_table: no data rows in '" + path + "'");

    DenseArray a;
    a.dims = {rows, expected_columns};
    a.data = std::move(values);
    return a;
}

void write_csv_table(const std::string& path, const DenseArray& table,
                     const std::string& header_comment) {
    if (table.rank() != 2)
        throw Error(ErrorKind::mismatch, "write_csv_table: table must be rank 2");
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw Error(ErrorKind::io, "write_csv_table: cannot open '" + path + "'",
                    IoCode::open_failed);
    if (!header_comment.empty())
        f << "# " << header_comment << "\n";
    char buf[40];
    for (std::size_t r = 0; r < table.dims[0]; ++r) {
        for (std::size_t c = 0; c < table.dims[1]; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", table.at2(r, c));
            f << (c ? "," : "") << buf;
        }
        f << "\n";
    }
    if (!f)
        throw Error(ErrorKind::io, "write_csv_table: write failed for '" + path + "'",
                    IoCode::write_failed);
}

}  // namespace dect

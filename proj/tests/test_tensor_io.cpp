#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dect/common.hpp"
#include "dect/tensor.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path d = fs::temp_directory_path() / "dect_tensor_io_tests";
    fs::create_directories(d);
    return d;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

void spew(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("array round trip is bit exact") {
    dect::DenseArray a;
    a.dims = {2, 3};
    a.data = {0.0, -0.0, 1.0, -1.5, 4.9406564584124654e-324,  // smallest denormal
              std::numeric_limits<double>::max()};
    fs::path p = temp_dir() / "round.bin";
    dect::write_array(p.string(), a);
    dect::DenseArray b = dect::read_array(p.string());
    REQUIRE(b.dims == a.dims);
    REQUIRE(b.data.size() == a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        std::uint64_t ba;
        std::uint64_t bb;
        std::memcpy(&ba, &a.data[i], 8);
        std::memcpy(&bb, &b.data[i], 8);
        CHECK(ba == bb);  // bit identity, keeps -0.0 and denormals distinct
    }
}

TEST_CASE("array header layout is frozen") {
    // [TRIVIAL] byte-level layout: magic, version=1, ndim, dims, payload LE.
    dect::DenseArray a;
    a.dims = {1};
    a.data = {1.0};
    fs::path p = temp_dir() / "layout.bin";
    dect::write_array(p.string(), a);
    std::vector<unsigned char> raw = slurp(p);
    REQUIRE(raw.size() == 4 + 4 + 4 + 4 + 8);
    CHECK(raw[0] == 'D');
    CHECK(raw[1] == 'E');
    CHECK(raw[2] == 'C');
    CHECK(raw[3] == 'T');
    CHECK(raw[4] == 1);  // version u32 LE
    CHECK(raw[5] == 0);
    CHECK(raw[6] == 0);
    CHECK(raw[7] == 0);
    CHECK(raw[8] == 1);  // ndim
    CHECK(raw[12] == 1);  // dims[0]
    // 1.0 in IEEE-754 double LE: 00 00 00 00 00 00 F0 3F
    const unsigned char want[8] = {0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
    for (int i = 0; i < 8; ++i)
        CHECK(raw[16 + i] == want[i]);
}

TEST_CASE("array reader rejects bad magic and version") {
    dect::DenseArray a;
    a.dims = {1};
    a.data = {2.0};
    fs::path p = temp_dir() / "bad.bin";
    dect::write_array(p.string(), a);

    std::vector<unsigned char> raw = slurp(p);
    std::vector<unsigned char> wrong_magic = raw;
    wrong_magic[0] = 'X';
    spew(p, wrong_magic);
    try {
        dect::read_array(p.string());
        FAIL("expected error");
    } catch (const dect::Error& e) {
        CHECK(e.kind() == dect::ErrorKind::io);
        CHECK(e.code() == dect::IoCode::bad_magic);
        CHECK(e.exit_code() == 5);
    }

    std::vector<unsigned char> wrong_version = raw;
    wrong_version[4] = 9;
    spew(p, wrong_version);
    try {
        dect::read_array(p.string());
        FAIL("expected error");
    } catch (const dect::Error& e) {
        CHECK(e.code() == dect::IoCode::bad_version);
    }
}

TEST_CASE("array reader rejects truncation and oversized headers") {
    dect::DenseArray a;
    a.dims = {2, 2};
    a.data = {1.0, 2.0, 3.0, 4.0};
    fs::path p = temp_dir() / "trunc.bin";
    dect::write_array(p.string(), a);
    std::vector<unsigned char> raw = slurp(p);

    std::vector<unsigned char> cut(raw.begin(), raw.end() - 5);
    spew(p, cut);
    try {
        dect::read_array(p.string());
        FAIL("expected error");
    } catch (const dect::Error& e) {
        CHECK(e.code() == dect::IoCode::truncated);
    }

    // Header that advertises more elements than the cap permits.
    std::vector<unsigned char> huge;
    const char magic[4] = {'D', 'E', 'C', 'T'};
    huge.insert(huge.end(), magic, magic + 4);
    auto push_u32 = [&huge](std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            huge.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
    };
    push_u32(1);
    push_u32(2);
    push_u32(1u << 16);
    push_u32(1u << 16);  // 2^32 elements, over the cap
    fs::path ph = temp_dir() / "huge.bin";
    spew(ph, huge);
    try {
        dect::read_array(ph.string());
        FAIL("expected error");
    } catch (const dect::Error& e) {
        CHECK(e.code() == dect::IoCode::too_large);
    }
}

TEST_CASE("missing file maps to io error") {
    try {
        dect::read_array((temp_dir() / "no_such_file.bin").string());
        FAIL("expected error");
    } catch (const dect::Error& e) {
        CHECK(e.kind() == dect::ErrorKind::io);
        CHECK(e.code() == dect::IoCode::open_failed);
    }
}

TEST_CASE("csv round trip and comment handling") {
    fs::path p = temp_dir() / "table.csv";
    {
        std::ofstream out(p);
        out << "# header comment\n";
        out << "20, 0.8096\n";
        out << "\n";
        out << "  30 ,0.3756\r\n";
        out << "150,0.1505\n";
    }
    dect::DenseArray rows = dect::read_csv_table(p.string(), 2);
    REQUIRE(rows.dims == std::vector<std::size_t>{3, 2});
    CHECK(rows.at2(0, 0) == doctest::Approx(20.0));
    CHECK(rows.at2(0, 1) == doctest::Approx(0.8096));
    CHECK(rows.at2(1, 0) == doctest::Approx(30.0));
    CHECK(rows.at2(2, 1) == doctest::Approx(0.1505));

    fs::path q = temp_dir() / "echo.csv";
    dect::write_csv_table(q.string(), rows, "echoed");
    dect::DenseArray again = dect::read_csv_table(q.string(), 2);
    REQUIRE(again.dims == rows.dims);
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(again.data[i] == rows.data[i]);  // %.17g preserves doubles exactly
}

TEST_CASE("csv reader reports ragged and malformed rows with line numbers") {
    fs::path p = temp_dir() / "ragged.csv";
    {
        std::ofstream out(p);
        out << "1,2\n";
        out << "3\n";
    }
    try {
        dect::read_csv_table(p.string(), 2);
        FAIL("expected error");
    } catch (const dect::Error& e) {
        CHECK(e.code() == dect::IoCode::ragged_row);
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }

    fs::path q = temp_dir() / "garbage.csv";
    {
        std::ofstream out(q);
        out << "1,2\n";
        out << "3,abc\n";
    }
    try {
        dect::read_csv_table(q.string(), 2);
        FAIL("expected error");
    } catch (const dect::Error& e) {
        CHECK(e.code() == dect::IoCode::bad_number);
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
}

TEST_CASE("element count guard rejects overflowing shapes") {
    CHECK(dect::checked_element_count({4, 4}, 1u << 28) == 16);
    CHECK_THROWS_AS(dect::checked_element_count({1u << 15, 1u << 15}, 1u << 28),
                    dect::Error);
}

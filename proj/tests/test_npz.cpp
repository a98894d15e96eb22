#include "doctest.h"
#include "helpers.hpp"

#include "essential/error.hpp"
#include "essential/npz.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

using namespace essential;

namespace {

const std::string kData = ESSENTIAL_TEST_DATA_DIR;

std::vector<std::uint8_t> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

NpyArray f8_array(std::vector<double> v, std::vector<std::size_t> shape) {
  NpyArray a;
  a.dtype = "f8";
  a.shape = std::move(shape);
  a.data.resize(v.size() * 8);
  std::memcpy(a.data.data(), v.data(), a.data.size());
  return a;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Internal;
}

}  // namespace

TEST_SUITE("npz") {
  TEST_CASE("reads a compressed archive written by numpy") {
    const auto a = read_npz(kData + "/numpy_fixture.npz");
    REQUIRE(a.count("pixels") == 1);
    const auto& px = a.at("pixels");
    CHECK(px.dtype == "u1");
    CHECK(px.shape == std::vector<std::size_t>{2, 3, 3});
    for (std::size_t i = 0; i < 18; ++i) CHECK(px.at(i) == static_cast<double>(i));
    const auto& lab = a.at("labels");
    CHECK(lab.dtype == "i8");
    CHECK(lab.shape == std::vector<std::size_t>{2, 1});
    CHECK(lab.at(0) == 4.0);
    CHECK(lab.at(1) == 7.0);
    const auto& val = a.at("values");
    CHECK(val.dtype == "f4");
    CHECK(val.at(0) == 0.5);
    CHECK(val.at(1) == -1.25);
  }

  TEST_CASE("reads a stored archive written by numpy") {
    const auto a = read_npz(kData + "/numpy_stored.npz");
    const auto& v = a.at("values");
    CHECK(v.count() == 3);
    CHECK(v.at(2) == -3.0);
  }

  TEST_CASE("npy serialisation round-trips") {
    const NpyArray a = f8_array({1, 2, 3, 4, 5, 6}, {2, 3});
    const NpyArray b = parse_npy(serialize_npy(a), "x");
    CHECK(b.dtype == "f8");
    CHECK(b.shape == a.shape);
    CHECK(b.data == a.data);
  }

  TEST_CASE("archives round-trip compressed and stored") {
    const std::string dir = testutil::temp_dir("npz");
    std::map<std::string, NpyArray> arrays{{"a", f8_array({0.25, -8}, {2})}, {"b", f8_array({3}, {1, 1})}};
    for (bool compress : {true, false}) {
      const std::string path = dir + (compress ? "/c.npz" : "/s.npz");
      write_npz(path, arrays, compress);
      const auto back = read_npz(path);
      REQUIRE(back.size() == 2);
      CHECK(back.at("a").data == arrays.at("a").data);
      CHECK(back.at("b").shape == arrays.at("b").shape);
    }
  }

  TEST_CASE("malformed input is reported") {
    auto bytes = file_bytes(kData + "/numpy_fixture.npz");
    REQUIRE(bytes.size() > 100);
    bytes.resize(bytes.size() / 2);
    CHECK(kind_of([&] { read_npz_bytes(bytes); }) == ErrorKind::Format);
    CHECK(kind_of([&] { read_npz_bytes({}); }) == ErrorKind::Format);
    CHECK(kind_of([&] { read_npz("/nonexistent/archive.npz"); }) == ErrorKind::Io);

    auto npy = serialize_npy(f8_array({1}, {1}));
    std::vector<std::uint8_t> big_endian = npy;
    const std::string s(big_endian.begin(), big_endian.end());
    const auto pos = s.find("<f8");
    REQUIRE(pos != std::string::npos);
    big_endian[pos] = '>';
    CHECK(kind_of([&] { parse_npy(big_endian, "x"); }) == ErrorKind::Format);
    npy[0] = 'X';
    try {
      parse_npy(npy, "member_name");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK(std::string(e.what()).find("member_name") != std::string::npos);
    }
  }
}

#pragma once

// Reader/writer for numpy .npz archives (zip of .npy members).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace essential {

struct NpyArray {
  std::string dtype;             // numpy descr without byte-order mark, e.g. "u1", "i8", "f4"
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> data;  // little-endian, C order

  std::size_t count() const;
  std::size_t item_size() const;
  // Element i converted to double.
  double at(std::size_t i) const;
};

NpyArray parse_npy(const std::vector<std::uint8_t>& bytes, const std::string& name);
std::vector<std::uint8_t> serialize_npy(const NpyArray& a);

// Member name (without the .npy suffix) -> array. Throws Error(Format) naming the
// member for anything malformed, Error(Io) if the file cannot be read.
std::map<std::string, NpyArray> read_npz(const std::string& path);
std::map<std::string, NpyArray> read_npz_bytes(const std::vector<std::uint8_t>& bytes);

// Writes a zip archive; members are deflated when `compress` is set.
void write_npz(const std::string& path, const std::map<std::string, NpyArray>& arrays, bool compress = true);

}  // namespace essential

#include "essential/npz.hpp"

#include "essential/error.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>

namespace essential {

namespace {

std::uint16_t rd16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t rd32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint64_t rd64(const std::uint8_t* p) {
  return static_cast<std::uint64_t>(rd32(p)) | (static_cast<std::uint64_t>(rd32(p + 4)) << 32);
}

void wr16(std::vector<std::uint8_t>& o, std::uint32_t v) {
  o.push_back(static_cast<std::uint8_t>(v));
  o.push_back(static_cast<std::uint8_t>(v >> 8));
}
void wr32(std::vector<std::uint8_t>& o, std::uint32_t v) {
  wr16(o, v & 0xffff);
  wr16(o, v >> 16);
}

std::vector<std::uint8_t> inflate_raw(const std::uint8_t* src, std::size_t n, std::size_t expected,
                                      const std::string& name) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  require(inflateInit2(&zs, -MAX_WBITS) == Z_OK, ErrorKind::Internal, "zlib init failed");
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const std::size_t produced = zs.total_out;
  inflateEnd(&zs);
  require(rc == Z_STREAM_END && produced == expected, ErrorKind::Format,
          "npz member '" + name + "': corrupt or truncated deflate stream");
  return out;
}

std::vector<std::uint8_t> deflate_raw(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  require(deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) == Z_OK,
          ErrorKind::Internal, "zlib init failed");
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  require(rc == Z_STREAM_END, ErrorKind::Internal, "deflate failed");
  return out;
}

}  // namespace

std::size_t NpyArray::count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::size_t NpyArray::item_size() const {
  require(dtype.size() >= 2, ErrorKind::Format, "bad dtype '" + dtype + "'");
  return static_cast<std::size_t>(std::stoi(dtype.substr(1)));
}

double NpyArray::at(std::size_t i) const {
  const std::size_t sz = item_size();
  const std::uint8_t* p = data.data() + i * sz;
  const char kind = dtype[0];
  if (kind == 'u') {
    switch (sz) {
      case 1: return p[0];
      case 2: return rd16(p);
      case 4: return rd32(p);
      case 8: return static_cast<double>(rd64(p));
    }
  } else if (kind == 'i') {
    switch (sz) {
      case 1: return static_cast<std::int8_t>(p[0]);
      case 2: return static_cast<std::int16_t>(rd16(p));
      case 4: return static_cast<std::int32_t>(rd32(p));
      case 8: return static_cast<double>(static_cast<std::int64_t>(rd64(p)));
    }
  } else if (kind == 'f') {
    if (sz == 4) {
      const std::uint32_t bits = rd32(p);
      float f;
      std::memcpy(&f, &bits, 4);
      return f;
    }
    if (sz == 8) {
      const std::uint64_t bits = rd64(p);
      double d;
      std::memcpy(&d, &bits, 8);
      return d;
    }
  } else if (kind == 'b' && sz == 1) {
    return p[0] != 0;
  }
  fail(ErrorKind::Format, "unsupported dtype '" + dtype + "'");
}

NpyArray parse_npy(const std::vector<std::uint8_t>& b, const std::string& name) {
  auto bad = [&name](const std::string& why) { fail(ErrorKind::Format, "npy '" + name + "': " + why); };
  if (b.size() < 10 || std::memcmp(b.data(), "\x93NUMPY", 6) != 0) bad("missing magic");
  const int major = b[6];
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = rd16(&b[8]);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (b.size() < 12) bad("truncated header");
    header_len = rd32(&b[8]);
    offset = 12;
  } else {
    bad("unsupported version " + std::to_string(major));
  }
  if (offset + header_len > b.size()) bad("truncated header");
  const std::string header(reinterpret_cast<const char*>(&b[offset]), header_len);

  NpyArray a;
  std::smatch m;
  if (!std::regex_search(header, m, std::regex("'descr':\\s*'([<>|=]?)([a-z]\\d+)'"))) bad("no descr");
  if (m[1] == ">" && m[2].str().substr(1) != "1") bad("big-endian data is not supported");
  a.dtype = m[2];
  if (std::regex_search(header, m, std::regex("'fortran_order':\\s*True"))) bad("fortran order is not supported");
  if (!std::regex_search(header, m, std::regex("'shape':\\s*\\(([^)]*)\\)"))) bad("no shape");
  const std::string dims = m[1];
  const std::regex num("\\d+");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it)
    a.shape.push_back(static_cast<std::size_t>(std::stoull(it->str())));

  const std::size_t start = offset + header_len;
  const std::size_t need = a.count() * a.item_size();
  if (b.size() - start < need) bad("data shorter than shape implies");
  a.data.assign(b.begin() + static_cast<std::ptrdiff_t>(start), b.begin() + static_cast<std::ptrdiff_t>(start + need));
  return a;
}

std::vector<std::uint8_t> serialize_npy(const NpyArray& a) {
  std::string header = "{'descr': '" + std::string(a.dtype[0] == 'u' && a.item_size() == 1 ? "|" : "<") + a.dtype +
                       "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < a.shape.size(); ++i) header += std::to_string(a.shape[i]) + (a.shape.size() == 1 ? "," : i + 1 < a.shape.size() ? ", " : "");
  header += "), }";
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::vector<std::uint8_t> out = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  wr16(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), a.data.begin(), a.data.end());
  return out;
}

std::map<std::string, NpyArray> read_npz_bytes(const std::vector<std::uint8_t>& z) {
  auto bad = [](const std::string& why) { fail(ErrorKind::Format, "npz archive: " + why); };
  if (z.size() < 22) bad("too short to be a zip archive");
  std::size_t eocd = std::string::npos;
  for (std::size_t i = z.size() - 22 + 1; i-- > 0 && z.size() - i <= 22 + 65535;)
    if (rd32(&z[i]) == 0x06054b50) {
      eocd = i;
      break;
    }
  if (eocd == std::string::npos) bad("end of central directory not found (truncated?)");
  std::uint64_t entries = rd16(&z[eocd + 10]);
  std::uint64_t cd_offset = rd32(&z[eocd + 16]);
  if ((cd_offset == 0xffffffffu || entries == 0xffff) && eocd >= 20 && rd32(&z[eocd - 20]) == 0x07064b50) {
    const std::uint64_t z64 = rd64(&z[eocd - 20 + 8]);
    if (z64 + 56 > z.size() || rd32(&z[z64]) != 0x06064b50) bad("bad zip64 end record");
    entries = rd64(&z[z64 + 32]);
    cd_offset = rd64(&z[z64 + 48]);
  }

  std::map<std::string, NpyArray> out;
  std::size_t p = static_cast<std::size_t>(cd_offset);
  for (std::uint64_t e = 0; e < entries; ++e) {
    if (p + 46 > z.size() || rd32(&z[p]) != 0x02014b50) bad("corrupt central directory");
    const std::uint16_t method = rd16(&z[p + 10]);
    std::uint64_t csize = rd32(&z[p + 20]);
    std::uint64_t usize = rd32(&z[p + 24]);
    const std::uint16_t name_len = rd16(&z[p + 28]);
    const std::uint16_t extra_len = rd16(&z[p + 30]);
    const std::uint16_t comment_len = rd16(&z[p + 32]);
    std::uint64_t local = rd32(&z[p + 42]);
    if (p + 46 + name_len + extra_len > z.size()) bad("corrupt central directory");
    const std::string fname(reinterpret_cast<const char*>(&z[p + 46]), name_len);
    // zip64 extra: present fields follow the order usize, csize, offset.
    for (std::size_t x = p + 46 + name_len; x + 4 <= p + 46 + name_len + extra_len;) {
      const std::uint16_t id = rd16(&z[x]), len = rd16(&z[x + 2]);
      if (id == 0x0001) {
        std::size_t q = x + 4;
        if (usize == 0xffffffffu) usize = rd64(&z[q]), q += 8;
        if (csize == 0xffffffffu) csize = rd64(&z[q]), q += 8;
        if (local == 0xffffffffu) local = rd64(&z[q]);
      }
      x += 4 + len;
    }
    p += 46 + name_len + extra_len + comment_len;

    if (local + 30 > z.size() || rd32(&z[local]) != 0x04034b50) bad("member '" + fname + "': bad local header");
    const std::size_t data = static_cast<std::size_t>(local) + 30 + rd16(&z[local + 26]) + rd16(&z[local + 28]);
    if (data + csize > z.size()) bad("member '" + fname + "' is truncated");
    std::vector<std::uint8_t> raw;
    if (method == 0) {
      raw.assign(z.begin() + static_cast<std::ptrdiff_t>(data), z.begin() + static_cast<std::ptrdiff_t>(data + csize));
    } else if (method == 8) {
      raw = inflate_raw(&z[data], static_cast<std::size_t>(csize), static_cast<std::size_t>(usize), fname);
    } else {
      bad("member '" + fname + "' uses unsupported compression " + std::to_string(method));
    }
    std::string key = fname;
    if (key.size() > 4 && key.substr(key.size() - 4) == ".npy") key.resize(key.size() - 4);
    out[key] = parse_npy(raw, key);
  }
  return out;
}

std::map<std::string, NpyArray> read_npz(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open archive " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_npz_bytes(bytes);
}

void write_npz(const std::string& path, const std::map<std::string, NpyArray>& arrays, bool compress) {
  std::vector<std::uint8_t> out, central;
  for (const auto& [key, arr] : arrays) {
    const std::string name = key + ".npy";
    const auto raw = serialize_npy(arr);
    const auto payload = compress ? deflate_raw(raw) : raw;
    require(payload.size() < 0xffffffffu && raw.size() < 0xffffffffu, ErrorKind::Input, "npz member too large");
    const auto crc = static_cast<std::uint32_t>(crc32(0L, raw.data(), static_cast<uInt>(raw.size())));
    const auto offset = static_cast<std::uint32_t>(out.size());
    const std::uint16_t method = compress ? 8 : 0;

    wr32(out, 0x04034b50);
    wr16(out, 20);
    wr16(out, 0);
    wr16(out, method);
    wr32(out, 0);  // time, date
    wr32(out, crc);
    wr32(out, static_cast<std::uint32_t>(payload.size()));
    wr32(out, static_cast<std::uint32_t>(raw.size()));
    wr16(out, static_cast<std::uint32_t>(name.size()));
    wr16(out, 0);
    out.insert(out.end(), name.begin(), name.end());
    out.insert(out.end(), payload.begin(), payload.end());

    wr32(central, 0x02014b50);
    wr16(central, 20);
    wr16(central, 20);
    wr16(central, 0);
    wr16(central, method);
    wr32(central, 0);
    wr32(central, crc);
    wr32(central, static_cast<std::uint32_t>(payload.size()));
    wr32(central, static_cast<std::uint32_t>(raw.size()));
    wr16(central, static_cast<std::uint32_t>(name.size()));
    wr16(central, 0);
    wr16(central, 0);
    wr16(central, 0);
    wr16(central, 0);
    wr32(central, 0);
    wr32(central, offset);
    central.insert(central.end(), name.begin(), name.end());
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  wr32(out, 0x06054b50);
  wr16(out, 0);
  wr16(out, 0);
  wr16(out, static_cast<std::uint32_t>(arrays.size()));
  wr16(out, static_cast<std::uint32_t>(arrays.size()));
  wr32(out, static_cast<std::uint32_t>(central.size()));
  wr32(out, cd_offset);
  wr16(out, 0);

  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  require(static_cast<bool>(f), ErrorKind::Io, "write failed: " + path);
}

}  // namespace essential

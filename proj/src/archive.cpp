#include "pubforge/archive.hpp"

#include <array>
#include <cstdio>
#include <cstring>

#include <zlib.h>

#include "pubforge/common.hpp"

namespace pubforge::archive {

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, unsigned long long value) {
  // width includes the terminating NUL
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), value);
}

unsigned long long get_octal(const char* field, std::size_t width) {
  unsigned long long v = 0;
  for (std::size_t i = 0; i < width && field[i] >= '0' && field[i] <= '7'; ++i) v = v * 8 + (field[i] - '0');
  return v;
}

} // namespace

std::string gzip(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 9, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(ErrorKind::io, "zlib deflate init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  std::array<char, 16384> buf{};
  int rc;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = deflate(&zs, Z_FINISH);
    out.append(buf.data(), buf.size() - zs.avail_out);
  } while (rc == Z_OK);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorKind::io, "zlib deflate failed");
  return out;
}

std::string gunzip(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw Error(ErrorKind::io, "zlib inflate init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  std::array<char, 16384> buf{};
  int rc;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf.data(), buf.size() - zs.avail_out);
  } while (rc == Z_OK);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorKind::parse, "corrupt gzip data");
  return out;
}

std::string write_tar_gz(const std::vector<Entry>& entries) {
  std::string tar;
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > 99) throw Error(ErrorKind::validation, "archive name '" + e.name + "' unsupported");
    std::array<char, kBlock> h{};
    std::memcpy(h.data(), e.name.data(), e.name.size());
    put_octal(h.data() + 100, 8, 0644);
    put_octal(h.data() + 108, 8, 0);
    put_octal(h.data() + 116, 8, 0);
    put_octal(h.data() + 124, 12, e.data.size());
    put_octal(h.data() + 136, 12, 0);
    h[156] = '0';
    std::memcpy(h.data() + 257, "ustar", 6);
    std::memcpy(h.data() + 263, "00", 2);
    std::memset(h.data() + 148, ' ', 8);
    unsigned sum = 0;
    for (char c : h) sum += static_cast<unsigned char>(c);
    std::snprintf(h.data() + 148, 8, "%06o", sum);
    h[155] = ' ';
    tar.append(h.data(), h.size());
    tar += e.data;
    tar.append((kBlock - e.data.size() % kBlock) % kBlock, '\0');
  }
  tar.append(2 * kBlock, '\0');
  return gzip(tar);
}

std::vector<Entry> read_tar_gz(std::string_view bytes) {
  std::string tar = gunzip(bytes);
  std::vector<Entry> out;
  std::size_t pos = 0;
  while (pos + kBlock <= tar.size()) {
    const char* h = tar.data() + pos;
    if (h[0] == '\0') break;
    Entry e;
    e.name.assign(h, strnlen(h, 100));
    auto size = get_octal(h + 124, 12);
    pos += kBlock;
    if (pos + size > tar.size()) throw Error(ErrorKind::parse, "truncated tar entry '" + e.name + "'");
    e.data = tar.substr(pos, size);
    pos += (size + kBlock - 1) / kBlock * kBlock;
    out.push_back(std::move(e));
  }
  return out;
}

} // namespace pubforge::archive

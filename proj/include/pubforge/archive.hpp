#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pubforge::archive {

struct Entry {
  std::string name;
  std::string data;

  bool operator==(const Entry&) const = default;
};

/// ustar + gzip with fixed metadata (mtime 0, mode 0644, uid/gid 0), so
/// equal entry lists give byte-identical archives.
std::string write_tar_gz(const std::vector<Entry>& entries);

/// Reads archives produced by write_tar_gz (regular files only).
std::vector<Entry> read_tar_gz(std::string_view bytes);

std::string gzip(std::string_view data);
std::string gunzip(std::string_view data);

} // namespace pubforge::archive

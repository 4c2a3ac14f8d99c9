#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "pubforge/common.hpp"

namespace pubforge::server {

struct ServerOptions {
  std::filesystem::path reports_dir;
  std::filesystem::path synonyms;
  std::filesystem::path static_dir; ///< served at /; a built-in index page when empty
  std::function<Date()> clock;      ///< creation date for rechecked reports; today() when unset
};

/// HTTP/JSON front end for stored reports and the synonym database.
///
///   GET  /api/reports               index: name, ref_code, filename, creation_date
///   GET  /api/reports/{name}        report JSON (?format=html for the rendered page)
///   GET  /api/synonyms?q=           substring search over both kinds
///   POST /api/synonyms              {kind, original, synonym}
///   POST /api/recheck/{name}        re-run compare from the stored inputs
class Server {
public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds `host`; port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void run();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace pubforge::server

#ifndef VFKIT_UTIL_FS_HPP
#define VFKIT_UTIL_FS_HPP

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>

#include "vfkit/error.hpp"

namespace vfkit::util {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InfraError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InfraError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw InfraError("short write to " + path.string());
}

/// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const fs::path& path, std::string_view data) {
  static std::atomic<unsigned long long> counter{0};
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
  write_file(tmp, data);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw InfraError("cannot rename into " + path.string());
  }
}

/// Root for sandbox directories and caches: $VF_WORKDIR or <tmp>/vfkit.
inline fs::path default_workdir() {
  if (const char* env = std::getenv("VF_WORKDIR"); env != nullptr && *env != '\0') return env;
  return fs::temp_directory_path() / "vfkit";
}

/// Fresh, uniquely named directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const fs::path& parent, std::string_view prefix = "run") {
    std::error_code ec;
    fs::create_directories(parent, ec);
    std::string templ = (parent / (std::string(prefix) + "-XXXXXX")).string();
    if (::mkdtemp(templ.data()) == nullptr) throw InfraError("mkdtemp failed under " + parent.string());
    path_ = templ;
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  [[nodiscard]] const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

}  // namespace vfkit::util

#endif  // VFKIT_UTIL_FS_HPP

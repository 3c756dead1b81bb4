#pragma once

#include <exception>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace glyco::cli {

/// The one directory a subcommand writes into. Remembers every file it
/// produced so a failed run can remove them again.
class OutputDir {
public:
  explicit OutputDir(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, std::string_view contents);
  void write_json(const std::string& name, const nlohmann::json& doc);
  void write_with(const std::string& name, const std::function<void(std::ostream&)>& fill);
  /// For files written by library savers directly into path(name).
  void record(const std::string& name);

  void rollback() noexcept;

private:
  std::filesystem::path dir_;
  bool created_ = false;
  std::vector<std::filesystem::path> written_;
};

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Results must be
/// stored by index; the first failure (lowest index) is rethrown.
void for_each_fold(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace glyco::cli

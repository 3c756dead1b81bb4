#include "outputs.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "glyco/error.hpp"

namespace glyco::cli {

namespace fs = std::filesystem;

OutputDir::OutputDir(fs::path dir) : dir_(std::move(dir)) {
  if (dir_.empty()) fail(ErrorKind::Config, "an output directory (--out) is required");
  std::error_code ec;
  if (fs::exists(dir_, ec)) {
    if (!fs::is_directory(dir_, ec))
      fail(ErrorKind::Io, "output path " + dir_.string() + " exists and is not a directory");
    return;
  }
  if (!fs::create_directories(dir_, ec) || ec)
    fail(ErrorKind::Io, "cannot create output directory " + dir_.string() + ": " + ec.message());
  created_ = true;
}

void OutputDir::write(const std::string& name, std::string_view contents) {
  const fs::path target = path(name);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorKind::Io, "write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot move output into place at " + target.string());
  }
  record(name);
}

void OutputDir::write_json(const std::string& name, const nlohmann::json& doc) {
  write(name, doc.dump(2) + "\n");
}

void OutputDir::write_with(const std::string& name,
                           const std::function<void(std::ostream&)>& fill) {
  std::ostringstream out;
  fill(out);
  write(name, out.str());
}

void OutputDir::record(const std::string& name) { written_.push_back(path(name)); }

void OutputDir::rollback() noexcept {
  std::error_code ec;
  for (const auto& p : written_) {
    fs::remove(p, ec);
    fs::path tmp = p;
    tmp += ".tmp";
    fs::remove(tmp, ec);
  }
  written_.clear();
  if (created_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
}

void for_each_fold(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace glyco::cli

#pragma once

// Little-endian container helpers shared by the prepared-set and LSTM model
// files: 8-byte magic, u32 version, u64 JSON length, JSON, then f64 payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "glyco/error.hpp"

namespace glyco::detail {

class ByteWriter {
public:
  void bytes(std::string_view s) { buf_.append(s); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void f64s(const std::vector<double>& vs) {
    for (double v : vs) f64(v);
  }

  const std::string& data() const noexcept { return buf_; }

private:
  std::string buf_;
};

class ByteReader {
public:
  ByteReader(std::string data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  void f64s(std::vector<double>& out, std::size_t n) {
    need(n * 8);
    out.resize(n);
    for (auto& v : out) v = f64();
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n)
      fail(ErrorKind::Format, what_ + ": truncated file (needed " + std::to_string(n) +
                                  " bytes, " + std::to_string(remaining()) + " left)");
  }

private:
  std::string data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace glyco::detail

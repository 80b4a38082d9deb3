#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "forge/errors.hpp"

namespace forge::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; add byte swapping for this host");

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    read_bytes(got.data(), got.size());
    if (got != magic) {
      throw FormatError(name_ + ": bad magic, expected \"" + std::string(magic) + "\"");
    }
  }

  template <typename T>
  T read() {
    T value{};
    read_bytes(&value, sizeof(T));
    return value;
  }

  void read_bytes(void* dst, std::size_t n) {
    if (n == 0) return;
    if (pos_ + n > size_) throw FormatError(name_ + ": truncated file");
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError(name_ + ": read failed");
    pos_ += n;
  }

  /// Guards against headers that claim more payload than the file holds,
  /// before any allocation sized from the header.
  void check_remaining(std::uint64_t bytes) const {
    if (bytes > size_ - pos_) {
      throw FormatError(name_ + ": header declares " + std::to_string(bytes) +
                        " payload bytes but only " + std::to_string(size_ - pos_) +
                        " remain");
    }
  }

  void expect_end() const {
    if (pos_ != size_) {
      throw FormatError(name_ + ": " + std::to_string(size_ - pos_) + " trailing bytes");
    }
  }

 private:
  std::istream& in_;
  std::string name_;
  std::uint64_t size_ = 0;
  std::uint64_t pos_ = 0;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <typename T>
  void write(const T& value) {
    write_bytes(&value, sizeof(T));
  }

  void write_bytes(const void* src, std::size_t n) {
    out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  }

 private:
  std::ostream& out_;
};

}  // namespace forge::detail

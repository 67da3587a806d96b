#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "metarecon/errors.hpp"

namespace metarecon::detail {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

class BinaryWriter {
 public:
  void magic(const char (&tag)[5]) { raw(tag, 4); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size() * sizeof(double)); }
  void str(const std::string& s) {
    u32(checked_u32(s.size()));
    raw(s.data(), s.size());
  }

  static std::uint32_t checked_u32(std::size_t n) {
    if (n > UINT32_MAX) throw FormatError("value does not fit in u32: " + std::to_string(n));
    return static_cast<std::uint32_t>(n);
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes_.data()),
              static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("write failed: " + path.string());
  }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }

  std::vector<unsigned char> bytes_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path_);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path_);
  }

  void expect_magic(const char (&tag)[5]) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), tag, 4) != 0) {
      throw BadMagicError(path_ + ": not a " + std::string(tag, 4) + " file");
    }
    pos_ = 4;
  }
  void expect_version(std::uint32_t version) {
    const std::uint32_t v = u32();
    if (v != version) {
      throw VersionMismatchError(path_ + ": format version " + std::to_string(v) +
                                 ", expected " + std::to_string(version));
    }
  }

  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  std::vector<double> f64s(std::size_t n) {
    if (n > remaining() / sizeof(double)) truncated();
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > remaining()) truncated();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& path() const { return path_; }

 private:
  [[noreturn]] void truncated() const { throw TruncatedError(path_ + ": unexpected end of file"); }

  void raw(void* p, std::size_t n) {
    if (n > remaining()) truncated();
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace metarecon::detail

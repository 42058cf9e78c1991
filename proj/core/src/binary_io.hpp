#pragma once

// Little-endian byte writer/reader shared by the persisted formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "retloc/errors.hpp"

namespace retloc::detail {

static_assert(std::endian::native == std::endian::little, "persisted formats assume a little-endian host");

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + size);
  }
  void put_tag(std::string_view tag) { put_bytes(tag.data(), tag.size()); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::size_t base_offset = 0)
      : data_(data), size_(size), base_(base_offset) {}

  template <class T>
  T get(const char* what) {
    static_assert(std::is_trivially_copyable_v<T>);
    require(sizeof(T), what);
    T value;
    std::memcpy(&value, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_bytes(void* out, std::size_t size, const char* what) {
    require(size, what);
    std::memcpy(out, data_ + pos_, size);
    pos_ += size;
  }
  void expect_tag(std::string_view tag, const char* what) {
    require(tag.size(), what);
    if (std::memcmp(data_ + pos_, tag.data(), tag.size()) != 0) {
      throw CorruptFile(std::string("bad ") + what, offset());
    }
    pos_ += tag.size();
  }
  void require(std::size_t n, const char* what) const {
    if (size_ - pos_ < n) {
      throw CorruptFile(std::string("truncated while reading ") + what, offset());
    }
  }

  std::size_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return size_ - pos_; }
  bool at_end() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);
std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace retloc::detail

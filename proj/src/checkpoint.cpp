// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <limits>

namespace rcrn::detail {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path)
      : b_(bytes), path_(path) {}

  void need(std::size_t n) const {
    if (pos_ + n > b_.size())
      throw DataError("checkpoint truncated: " + path_);
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(b_[pos_++]))
           << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b_[pos_++]))
           << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b_[pos_++]))
           << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_entries(const std::string& path, const std::vector<RawEntry>& es) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  if (es.size() > std::numeric_limits<std::uint32_t>::max())
    throw ContractError("checkpoint: too many entries");
  put_u32(out, static_cast<std::uint32_t>(es.size()));
  for (const RawEntry& e : es) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw ContractError("checkpoint: entry name too long");
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.append(e.name);
    if (e.is_text) {
      out.push_back(1);  // rank
      put_u64(out, e.text.size());
      out.append(e.text);
    } else {
      if (e.extents.size() > 255)
        throw ContractError("checkpoint: rank too large");
      out.push_back(static_cast<char>(e.extents.size()));
      std::uint64_t numel = 1;
      for (std::uint64_t x : e.extents) {
        put_u64(out, x);
        numel *= x;
      }
      if (numel != e.scalars.size())
        throw ContractError("checkpoint: extent/payload mismatch for " + e.name);
      for (float v : e.scalars) put_f32(out, v);
    }
  }
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("checkpoint write failed: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot move checkpoint into place: " + path);
}

std::vector<RawEntry> read_entries(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  Reader r(bytes, path);
  std::string magic = r.bytes(4);
  if (magic != std::string(kMagic, 4))
    throw DataError("checkpoint has bad magic: " + path);
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("checkpoint version " + std::to_string(version) +
                    " unsupported");
  std::uint32_t count = r.u32();
  std::vector<RawEntry> es;
  es.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    RawEntry e;
    std::uint16_t nlen = r.u16();
    e.name = r.bytes(nlen);
    std::uint8_t rank = r.u8();
    e.extents.resize(rank);
    for (std::uint8_t d = 0; d < rank; ++d) e.extents[d] = r.u64();
    e.is_text = e.name.rfind("__", 0) == 0;
    if (e.is_text) {
      if (rank != 1)
        throw DataError("checkpoint: text entry " + e.name + " must be rank 1");
      e.text = r.bytes(static_cast<std::size_t>(e.extents[0]));
    } else {
      std::uint64_t numel = 1;
      for (std::uint64_t x : e.extents) {
        if (x == 0 || numel > std::numeric_limits<std::uint64_t>::max() / x)
          throw DataError("checkpoint: bad extents in entry " + e.name);
        numel *= x;
      }
      e.scalars.resize(static_cast<std::size_t>(numel));
      for (std::uint64_t k = 0; k < numel; ++k)
        e.scalars[static_cast<std::size_t>(k)] = r.f32();
    }
    es.push_back(std::move(e));
  }
  if (!r.done()) throw DataError("checkpoint has trailing bytes: " + path);
  return es;
}

std::string join_lines(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += '\n';
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
}

}  // namespace rcrn::detail

// Copyright 2026 The fedtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedtrack/weight_blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedtrack/error.hpp"

namespace fedtrack {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'W', 'B'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw StructuralError("weight blob truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t TensorShape::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

WeightBlob::WeightBlob(std::vector<TensorShape> manifest, std::vector<float> values, std::uint32_t version)
    : manifest_(std::move(manifest)), values_(std::move(values)), version_(version) {
  std::size_t total = 0;
  for (const auto& t : manifest_) total += t.numel();
  if (total != values_.size()) {
    throw StructuralError("manifest describes " + std::to_string(total) + " parameters but payload has " +
                          std::to_string(values_.size()));
  }
}

std::pair<std::size_t, std::size_t> WeightBlob::range(std::string_view name) const {
  std::size_t offset = 0;
  for (const auto& t : manifest_) {
    if (t.name == name) return {offset, t.numel()};
    offset += t.numel();
  }
  throw StructuralError("unknown tensor '" + std::string(name) + "'");
}

std::span<const float> WeightBlob::tensor(std::string_view name) const {
  const auto [offset, n] = range(name);
  return std::span<const float>(values_).subspan(offset, n);
}

std::size_t WeightBlob::header_size() const {
  std::size_t n = 12;
  for (const auto& t : manifest_) n += 4 + t.name.size() + 4 + 4 * t.shape.size();
  return n;
}

std::size_t WeightBlob::byte_size() const { return header_size() + 4 * values_.size(); }

std::vector<std::uint8_t> WeightBlob::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(byte_size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, version_);
  put_u32(out, static_cast<std::uint32_t>(manifest_.size()));
  for (const auto& t : manifest_) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32(out, d);
  }
  for (float f : values_) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

WeightBlob WeightBlob::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw StructuralError("bad weight blob magic");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) throw StructuralError("unsupported weight blob version " + std::to_string(version));
  const std::uint32_t entries = r.u32();
  std::vector<TensorShape> manifest;
  std::size_t total = 0;
  for (std::uint32_t e = 0; e < entries; ++e) {
    TensorShape t;
    t.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.u32());
    total += t.numel();
    manifest.push_back(std::move(t));
  }
  std::vector<float> values(total);
  for (auto& v : values) v = std::bit_cast<float>(r.u32());
  if (!r.done()) throw StructuralError("trailing bytes after weight blob payload");
  return WeightBlob(std::move(manifest), std::move(values), version);
}

void WeightBlob::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto bytes = serialize();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

WeightBlob WeightBlob::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

bool WeightBlob::operator==(const WeightBlob& other) const {
  if (!same_layout(other) || version_ != other.version_) return false;
  return std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
}

}  // namespace fedtrack

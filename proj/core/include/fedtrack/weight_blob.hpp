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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedtrack {

struct TensorShape {
  std::string name;
  std::vector<std::uint32_t> shape;

  std::size_t numel() const;
  bool operator==(const TensorShape&) const = default;
};

/// Flat float32 parameter vector plus its layout manifest: the unit exchanged
/// between robots and the cloud.
///
/// Wire format (all integers little-endian u32):
///   "FTWB" | version | entry count | { name length | name bytes | rank | dims... }*
///   | float32 payload (little-endian, manifest order)
class WeightBlob {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  WeightBlob() = default;
  WeightBlob(std::vector<TensorShape> manifest, std::vector<float> values, std::uint32_t version = kFormatVersion);

  const std::vector<TensorShape>& manifest() const { return manifest_; }
  std::span<const float> values() const { return values_; }
  std::span<float> mutable_values() { return values_; }
  std::uint32_t version() const { return version_; }
  std::size_t parameter_count() const { return values_.size(); }

  /// Tensors listed here are kept client-side by personalized aggregation.
  std::set<std::string> personalized_mask;

  /// Offset and length of a tensor inside the payload; StructuralError if the
  /// name is unknown.
  std::pair<std::size_t, std::size_t> range(std::string_view name) const;
  std::span<const float> tensor(std::string_view name) const;

  bool same_layout(const WeightBlob& other) const { return manifest_ == other.manifest_; }

  /// Serialized size in bytes: header plus 4 bytes per parameter.
  std::size_t byte_size() const;
  std::size_t header_size() const;

  std::vector<std::uint8_t> serialize() const;
  static WeightBlob deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static WeightBlob load(const std::filesystem::path& path);

  bool operator==(const WeightBlob& other) const;

 private:
  std::vector<TensorShape> manifest_;
  std::vector<float> values_;
  std::uint32_t version_ = kFormatVersion;
};

}  // namespace fedtrack

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tiws/forest.hpp"

namespace tiws {

// Binary model layout (.tiws), all integers little-endian:
//
//   "TIWS" | version u8 | psi u32 | tree_count u32
//   per tree: node_count u32, then node_count records
//     split: kind u8 = 0 | feature u16 | threshold f32 | left u32 | right u32
//     leaf:  kind u8 = 1 | size u32
//
// Thresholds are narrowed to 32-bit floats on write.
inline constexpr std::uint8_t kModelVersion = 1;
inline constexpr std::size_t kHeaderBytes = 13;
inline constexpr std::size_t kTreeHeaderBytes = 4;
inline constexpr std::size_t kSplitRecordBytes = 15;
inline constexpr std::size_t kLeafRecordBytes = 5;

class FormatError : public std::runtime_error {
 public:
  enum class Code {
    kBadMagic,
    kBadVersion,
    kTruncated,
    kChildOutOfRange,
    kBadNodeKind,
    kMalformedTree,
    kBadHeader,
    kTrailingBytes,
    kFeatureOverflow,
  };

  FormatError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

std::vector<std::uint8_t> serialize(const IForest& forest);

// Throws FormatError for any blob that does not describe a valid forest.
IForest deserialize(std::span<const std::uint8_t> bytes);

// Size serialize() would produce, without building the blob.
std::size_t serialized_size(const IForest& forest);

void save_model(const IForest& forest, const std::filesystem::path& path);
IForest load_model(const std::filesystem::path& path);

struct MemoryReport {
  std::vector<std::size_t> nodes_per_tree;
  std::size_t total_nodes = 0;
  std::size_t serialized_bytes = 0;
  // t * (2 psi - 1).
  std::size_t node_bound = 0;
};

MemoryReport memory_report(const IForest& forest);

}  // namespace tiws

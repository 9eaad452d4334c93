#include "tiws/model_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "tiws/errors.hpp"

namespace tiws {
namespace {

constexpr char kMagic[4] = {'T', 'I', 'W', 'S'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  void put(std::uint32_t v, int width) {
    for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(FormatError::Code::kTruncated,
                        std::string("truncated stream while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(const char* what) { return get(4, what); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

 private:
  std::uint32_t get(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint32_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t tree_bytes(const ITree& tree) {
  std::size_t n = kTreeHeaderBytes;
  for (const auto& node : tree.nodes()) n += node.is_leaf() ? kLeafRecordBytes : kSplitRecordBytes;
  return n;
}

}  // namespace

std::size_t serialized_size(const IForest& forest) {
  std::size_t n = kHeaderBytes;
  for (const auto& tree : forest.trees()) n += tree_bytes(tree);
  return n;
}

std::vector<std::uint8_t> serialize(const IForest& forest) {
  if (forest.subsample_size() > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(FormatError::Code::kBadHeader, "subsample size exceeds 32 bits");
  }
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u8(kModelVersion);
  w.u32(static_cast<std::uint32_t>(forest.subsample_size()));
  w.u32(static_cast<std::uint32_t>(forest.size()));
  for (const auto& tree : forest.trees()) {
    w.u32(static_cast<std::uint32_t>(tree.node_count()));
    for (const auto& node : tree.nodes()) {
      if (node.is_leaf()) {
        w.u8(static_cast<std::uint8_t>(ITreeNode::Kind::kLeaf));
        w.u32(node.size);
      } else {
        if (node.feature > std::numeric_limits<std::uint16_t>::max()) {
          throw FormatError(FormatError::Code::kFeatureOverflow,
                            "feature index " + std::to_string(node.feature) +
                                " does not fit in 16 bits");
        }
        w.u8(static_cast<std::uint8_t>(ITreeNode::Kind::kSplit));
        w.u16(static_cast<std::uint16_t>(node.feature));
        w.f32(static_cast<float>(node.threshold));
        w.u32(node.left);
        w.u32(node.right);
      }
    }
  }
  return std::move(w).take();
}

IForest deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic, "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(FormatError::Code::kBadMagic, "bad magic");
  }
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8("magic");
  const std::uint8_t version = r.u8("version");
  if (version != kModelVersion) {
    throw FormatError(FormatError::Code::kBadVersion,
                      "unsupported model version " + std::to_string(version));
  }
  const std::uint32_t psi = r.u32("subsample size");
  const std::uint32_t tree_count = r.u32("tree count");
  if (psi < 2) throw FormatError(FormatError::Code::kBadHeader, "subsample size below 2");
  if (tree_count == 0) throw FormatError(FormatError::Code::kBadHeader, "model has no trees");
  // Every tree needs at least a node count and one leaf.
  if (r.remaining() / (kTreeHeaderBytes + kLeafRecordBytes) < tree_count) {
    throw FormatError(FormatError::Code::kTruncated, "truncated stream: too few bytes for trees");
  }

  std::vector<ITree> trees;
  trees.reserve(tree_count);
  for (std::uint32_t t = 0; t < tree_count; ++t) {
    const std::uint32_t node_count = r.u32("node count");
    if (node_count == 0) {
      throw FormatError(FormatError::Code::kMalformedTree,
                        "tree " + std::to_string(t) + " has no nodes");
    }
    if (r.remaining() / kLeafRecordBytes < node_count) {
      throw FormatError(FormatError::Code::kTruncated,
                        "truncated stream in tree " + std::to_string(t));
    }
    std::vector<ITreeNode> nodes;
    nodes.reserve(node_count);
    for (std::uint32_t i = 0; i < node_count; ++i) {
      const std::uint8_t kind = r.u8("node kind");
      if (kind == static_cast<std::uint8_t>(ITreeNode::Kind::kLeaf)) {
        nodes.push_back(ITreeNode::leaf(r.u32("leaf size")));
      } else if (kind == static_cast<std::uint8_t>(ITreeNode::Kind::kSplit)) {
        const std::uint16_t feature = r.u16("split feature");
        const float threshold = r.f32("split threshold");
        const std::uint32_t left = r.u32("left child");
        const std::uint32_t right = r.u32("right child");
        if (left >= node_count || right >= node_count) {
          throw FormatError(FormatError::Code::kChildOutOfRange,
                            "child index out of range in tree " + std::to_string(t));
        }
        nodes.push_back(ITreeNode::split(feature, threshold, left, right));
      } else {
        throw FormatError(FormatError::Code::kBadNodeKind,
                          "unknown node kind " + std::to_string(kind));
      }
    }
    try {
      ITree tree(std::move(nodes));
      if (tree.trained_subsample_size() < 1 || tree.trained_subsample_size() > psi) {
        throw std::invalid_argument("leaf sizes sum to " +
                                    std::to_string(tree.trained_subsample_size()) +
                                    ", outside [1, " + std::to_string(psi) + "]");
      }
      trees.push_back(std::move(tree));
    } catch (const std::invalid_argument& e) {
      throw FormatError(FormatError::Code::kMalformedTree,
                        "tree " + std::to_string(t) + ": " + e.what());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Code::kTrailingBytes,
                      std::to_string(r.remaining()) + " trailing bytes after last tree");
  }
  return IForest(std::move(trees), psi);
}

void save_model(const IForest& forest, const std::filesystem::path& path) {
  const auto bytes = serialize(forest);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

IForest load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

MemoryReport memory_report(const IForest& forest) {
  MemoryReport report;
  for (const auto& tree : forest.trees()) {
    report.nodes_per_tree.push_back(tree.node_count());
    report.total_nodes += tree.node_count();
  }
  report.serialized_bytes = serialized_size(forest);
  report.node_bound = forest.size() * (2 * forest.subsample_size() - 1);
  return report;
}

}  // namespace tiws

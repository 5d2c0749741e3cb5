#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mncd/tensor.hpp"

namespace mncd {

// On-disk layout:
//   <root>/manifest.json
//   <root>/<site_id>/<patch_id>/{A.png, B.png, mask.png}
struct SamplePair {
  Tensor image_a;  // [3,H,W] in [0,1]
  Tensor image_b;  // [3,H,W] in [0,1]
  Tensor mask;     // [H,W] in {0,1}
  std::string site_id;
  std::string patch_id;
};

// Bytes are scaled by 1/255; mask bytes >= 128 become 1.
SamplePair load_sample(const std::filesystem::path& root, const std::string& site_id,
                       const std::string& patch_id);

enum class Split { train, val, test };
const char* split_name(Split split);
Split parse_split(const std::string& name);

struct PatchRef {
  std::string site_id;
  std::string patch_id;
  friend auto operator<=>(const PatchRef&, const PatchRef&) = default;
};

// site_id -> patch ids
using SiteCatalog = std::map<std::string, std::vector<std::string>>;

struct SplitManifest {
  std::map<std::string, Split> site_split;
  std::map<Split, std::vector<PatchRef>> patches;
  std::array<double, 3> ratios{0.6, 0.1, 0.3};
  std::uint64_t seed = 0;

  const std::vector<PatchRef>& split(Split s) const;
};

// Site-level random partition. Sites are sorted before shuffling, so the
// result depends only on the set of ids and the seed. Validation and test
// counts are rounded; train takes the remainder.
SplitManifest make_split_manifest(const SiteCatalog& catalog,
                                  std::array<double, 3> ratios = {0.6, 0.1, 0.3},
                                  std::uint64_t seed = 8888);
SplitManifest make_split_manifest(const std::vector<std::string>& site_ids,
                                  std::array<double, 3> ratios = {0.6, 0.1, 0.3},
                                  std::uint64_t seed = 8888);

void write_manifest(const std::filesystem::path& root, const SiteCatalog& catalog,
                    const SplitManifest& manifest);
SplitManifest read_manifest(const std::filesystem::path& root, SiteCatalog* catalog = nullptr);

struct SyntheticOptions {
  std::int64_t num_pairs = 32;
  std::int64_t size = 256;
  double change_fraction = 0.15;
  std::uint64_t seed = 8888;
  // 0 means one site per pair.
  std::int64_t num_sites = 0;
  std::array<double, 3> ratios{0.6, 0.1, 0.3};
};

// Minimum per-pixel difference (max over channels, in [0,1] units) between
// the two images inside every changed region.
inline constexpr double kSyntheticChangeThreshold = 0.1;

// Writes pairs whose image B equals image A except inside inserted
// excavation polygons; the mask is exactly those polygons. Both images also
// share some pre-existing pits, which are not change. Deterministic in seed.
SplitManifest generate_synthetic_dataset(const std::filesystem::path& root,
                                         const SyntheticOptions& options);

// Seeded, epoch-indexed batching. Every epoch visits each item once; the
// last batch may be short.
class BatchIterator {
 public:
  BatchIterator(std::vector<PatchRef> items, std::int64_t batch_size, bool shuffle,
                std::uint64_t seed);

  std::vector<std::vector<std::size_t>> epoch_indices(std::uint64_t epoch) const;
  std::vector<std::vector<PatchRef>> epoch(std::uint64_t epoch) const;
  std::size_t batches_per_epoch() const;
  const std::vector<PatchRef>& items() const { return items_; }

 private:
  std::vector<PatchRef> items_;
  std::int64_t batch_size_;
  bool shuffle_;
  std::uint64_t seed_;
};

BatchIterator batch_iterator(const SplitManifest& manifest, const std::string& split,
                             std::int64_t batch_size, bool shuffle, std::uint64_t seed);

// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

struct Batch {
  Tensor image_a;  // [N,3,H,W]
  Tensor image_b;  // [N,3,H,W]
  Tensor mask;     // [N,1,H,W]
};

Batch stack_batch(const std::vector<SamplePair>& samples, const std::vector<std::size_t>& indices,
                  DType dtype = DType::f32);

// A dataset root with its manifest. Samples load lazily.
class Dataset {
 public:
  explicit Dataset(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  const SplitManifest& manifest() const { return manifest_; }
  const SiteCatalog& catalog() const { return catalog_; }
  std::vector<SamplePair> load_split(Split split) const;

 private:
  std::filesystem::path root_;
  SiteCatalog catalog_;
  SplitManifest manifest_;
};

}  // namespace mncd

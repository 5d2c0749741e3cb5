#include "mncd/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "mncd/image_io.hpp"

namespace mncd {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

Tensor image_tensor(const Image8& img) {
  Tensor t({3, img.height, img.width});
  auto out = t.values<float>();
  const std::int64_t plane = img.height * img.width;
  for (std::int64_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      const int src = img.channels == 3 ? c : 0;
      out[c * plane + p] = static_cast<float>(img.pixels[p * img.channels + src]) / 255.0f;
    }
  }
  return t;
}

Tensor mask_tensor(const Image8& img) {
  Tensor t({img.height, img.width});
  auto out = t.values<float>();
  const std::int64_t plane = img.height * img.width;
  for (std::int64_t p = 0; p < plane; ++p) {
    // Colour masks use their first channel.
    out[p] = img.pixels[p * img.channels] >= 128 ? 1.0f : 0.0f;
  }
  return t;
}

void check_dims(const Image8& img, std::int64_t h, std::int64_t w, const fs::path& path) {
  if (img.height != h || img.width != w) {
    throw DimensionMismatchError(path.string() + ": size " + std::to_string(img.height) + "x" +
                                 std::to_string(img.width) + " does not match " +
                                 std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

SamplePair load_sample(const fs::path& root, const std::string& site_id,
                       const std::string& patch_id) {
  const fs::path dir = root / site_id / patch_id;
  const Image8 a = read_png(dir / "A.png");
  const Image8 b = read_png(dir / "B.png");
  const Image8 m = read_png(dir / "mask.png");
  check_dims(b, a.height, a.width, dir / "B.png");
  check_dims(m, a.height, a.width, dir / "mask.png");
  return {image_tensor(a), image_tensor(b), mask_tensor(m), site_id, patch_id};
}

const char* split_name(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ArgumentError("unknown split '" + name + "' (expected train, val or test)");
}

const std::vector<PatchRef>& SplitManifest::split(Split s) const {
  static const std::vector<PatchRef> empty;
  auto it = patches.find(s);
  return it == patches.end() ? empty : it->second;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

namespace {

void check_ratios(const std::array<double, 3>& ratios) {
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ArgumentError("split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ArgumentError("split ratios must sum to 1");
  }
}

}  // namespace

SplitManifest make_split_manifest(const SiteCatalog& catalog, std::array<double, 3> ratios,
                                  std::uint64_t seed) {
  check_ratios(ratios);
  const std::size_t n = catalog.size();
  if (n < 3) {
    throw ArgumentError("need at least 3 sites to split, got " + std::to_string(n));
  }
  std::vector<std::string> sites;
  sites.reserve(n);
  for (const auto& [site, _] : catalog) sites.push_back(site);  // map keys are sorted

  const auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(ratios[2] * static_cast<double>(n)));
  if (n_val + n_test > n) throw ArgumentError("split ratios leave no room for training sites");
  const std::size_t n_train = n - n_val - n_test;

  SplitManifest m;
  m.ratios = ratios;
  m.seed = seed;
  m.patches[Split::train];
  m.patches[Split::val];
  m.patches[Split::test];
  const auto order = seeded_permutation(n, seed);
  for (std::size_t k = 0; k < n; ++k) {
    const Split s = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
    m.site_split[sites[order[k]]] = s;
  }
  for (const auto& [site, patch_ids] : catalog) {
    auto& list = m.patches[m.site_split.at(site)];
    for (const auto& p : patch_ids) list.push_back({site, p});
  }
  for (auto& [_, list] : m.patches) std::sort(list.begin(), list.end());
  return m;
}

SplitManifest make_split_manifest(const std::vector<std::string>& site_ids,
                                  std::array<double, 3> ratios, std::uint64_t seed) {
  SiteCatalog catalog;
  for (const auto& s : site_ids) {
    if (!catalog.emplace(s, std::vector<std::string>{}).second) {
      throw ArgumentError("duplicate site id '" + s + "'");
    }
  }
  return make_split_manifest(catalog, ratios, seed);
}

void write_manifest(const fs::path& root, const SiteCatalog& catalog,
                    const SplitManifest& manifest) {
  json j;
  j["format"] = "mncd-dataset";
  j["version"] = 1;
  j["seed"] = manifest.seed;
  j["ratios"] = manifest.ratios;
  json sites = json::object();
  for (const auto& [site, patches] : catalog) {
    sites[site] = {{"split", split_name(manifest.site_split.at(site))}, {"patches", patches}};
  }
  j["sites"] = std::move(sites);
  fs::create_directories(root);
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw DataError((root / "manifest.json").string() + ": cannot write");
  out << j.dump(2) << '\n';
}

SplitManifest read_manifest(const fs::path& root, SiteCatalog* catalog_out) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError(path.string() + ": manifest not found");
  SplitManifest m;
  SiteCatalog catalog;
  try {
    const json j = json::parse(in);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ratios = j.at("ratios").get<std::array<double, 3>>();
    m.patches[Split::train];
    m.patches[Split::val];
    m.patches[Split::test];
    for (const auto& [site, entry] : j.at("sites").items()) {
      const Split s = parse_split(entry.at("split").get<std::string>());
      m.site_split[site] = s;
      auto ids = entry.at("patches").get<std::vector<std::string>>();
      for (const auto& p : ids) m.patches[s].push_back({site, p});
      catalog[site] = std::move(ids);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  } catch (const ArgumentError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  for (auto& [_, list] : m.patches) std::sort(list.begin(), list.end());
  if (catalog_out != nullptr) *catalog_out = std::move(catalog);
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  // 53-bit uniform in [0,1); avoids the library's implementation-defined
  // distributions so datasets match across standard libraries.
  double uniform() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(engine() % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Bilinear upsampling of a coarse random lattice.
std::vector<double> smooth_field(Rng& rng, std::int64_t size, std::int64_t cells) {
  const std::int64_t g = cells + 1;
  std::vector<double> lattice(static_cast<std::size_t>(g * g));
  for (auto& v : lattice) v = rng.uniform();
  std::vector<double> field(static_cast<std::size_t>(size * size));
  const double step = static_cast<double>(cells) / static_cast<double>(size);
  for (std::int64_t y = 0; y < size; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * step;
    const auto y0 = std::min<std::int64_t>(static_cast<std::int64_t>(fy), cells - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < size; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * step;
      const auto x0 = std::min<std::int64_t>(static_cast<std::int64_t>(fx), cells - 1);
      const double tx = fx - static_cast<double>(x0);
      const double v00 = lattice[y0 * g + x0], v01 = lattice[y0 * g + x0 + 1];
      const double v10 = lattice[(y0 + 1) * g + x0], v11 = lattice[(y0 + 1) * g + x0 + 1];
      field[y * size + x] =
          (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
  }
  return field;
}

struct Polygon {
  std::vector<double> xs, ys;

  bool contains(double px, double py) const {
    bool inside = false;
    const std::size_t n = xs.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      if ((ys[i] > py) != (ys[j] > py) &&
          px < (xs[j] - xs[i]) * (py - ys[i]) / (ys[j] - ys[i]) + xs[i]) {
        inside = !inside;
      }
    }
    return inside;
  }
};

// Star-shaped, nearly convex blob around a random center.
Polygon random_polygon(Rng& rng, std::int64_t size, double radius) {
  const double cx = rng.uniform(0.0, static_cast<double>(size));
  const double cy = rng.uniform(0.0, static_cast<double>(size));
  const auto n = rng.integer(6, 9);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Polygon p;
  for (std::int64_t k = 0; k < n; ++k) {
    const double a = phase + 2.0 * std::numbers::pi * (static_cast<double>(k) + rng.uniform(-0.25, 0.25)) /
                                 static_cast<double>(n);
    const double r = radius * rng.uniform(0.7, 1.0);
    p.xs.push_back(cx + r * std::cos(a));
    p.ys.push_back(cy + r * std::sin(a));
  }
  return p;
}

std::vector<std::uint8_t> rasterize(const Polygon& poly, std::int64_t size) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(size * size), 0);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      m[y * size + x] = poly.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
    }
  }
  return m;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Bare-soil excavation texture: bright, desaturated, banded.
struct PitTexture {
  double angle, period, tint;
  std::array<double, 3> at(double x, double y, double noise) const {
    const double band =
        0.05 * std::sin(2.0 * std::numbers::pi * (x * std::cos(angle) + y * std::sin(angle)) / period);
    const double s = band + noise + tint;
    return {0.80 + s, 0.75 + s, 0.68 + s};
  }
};

PitTexture random_texture(Rng& rng) {
  return {rng.uniform(0.0, std::numbers::pi), rng.uniform(4.0, 9.0), rng.uniform(-0.03, 0.03)};
}

struct SyntheticPair {
  std::vector<std::uint8_t> a, b, mask;  // RGB, RGB, gray
};

SyntheticPair synthesize(Rng& rng, std::int64_t size, double change_fraction) {
  const std::int64_t plane = size * size;
  const auto cells = std::max<std::int64_t>(2, size / 16);
  const auto terrain = smooth_field(rng, size, cells);
  const auto shade = smooth_field(rng, size, std::max<std::int64_t>(2, cells / 2));
  std::vector<double> noise(static_cast<std::size_t>(plane));
  for (auto& v : noise) v = rng.uniform(-0.02, 0.02);

  constexpr std::array<double, 3> kVegetation{0.22, 0.36, 0.16};
  constexpr std::array<double, 3> kSoil{0.46, 0.42, 0.30};
  std::vector<double> a(static_cast<std::size_t>(plane * 3));
  for (std::int64_t p = 0; p < plane; ++p) {
    const double t = terrain[p];
    const double gain = 0.9 + 0.2 * shade[p];
    for (int c = 0; c < 3; ++c) {
      a[p * 3 + c] = (kVegetation[c] * (1 - t) + kSoil[c] * t) * gain + noise[p];
    }
  }

  // Pre-existing pits appear in both acquisitions.
  std::vector<std::uint8_t> old_pit(static_cast<std::size_t>(plane), 0);
  const auto n_old = rng.integer(0, 2);
  for (std::int64_t k = 0; k < n_old; ++k) {
    const auto poly = random_polygon(rng, size, static_cast<double>(size) * rng.uniform(0.05, 0.10));
    const auto tex = random_texture(rng);
    const auto m = rasterize(poly, size);
    for (std::int64_t p = 0; p < plane; ++p) {
      if (!m[p]) continue;
      old_pit[p] = 1;
      const auto rgb = tex.at(static_cast<double>(p % size), static_cast<double>(p / size), noise[p]);
      for (int c = 0; c < 3; ++c) a[p * 3 + c] = rgb[c];
    }
  }

  std::vector<double> b = a;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(plane), 0);
  const double target = change_fraction * rng.uniform(0.85, 1.15) * static_cast<double>(plane);
  const double n_blobs = rng.uniform(1.5, 4.0);
  const double radius = std::sqrt(target / (std::numbers::pi * 0.72 * n_blobs));
  std::int64_t covered = 0;
  for (int attempt = 0; attempt < 200 && static_cast<double>(covered) < 0.9 * target; ++attempt) {
    const auto poly = random_polygon(rng, size, radius * rng.uniform(0.6, 1.3));
    const auto tex = random_texture(rng);
    const auto m = rasterize(poly, size);
    std::int64_t added = 0;
    for (std::int64_t p = 0; p < plane; ++p) added += m[p] && !old_pit[p] && !mask[p];
    if (added == 0 || static_cast<double>(covered + added) > 1.15 * target) continue;
    covered += added;
    for (std::int64_t p = 0; p < plane; ++p) {
      if (!m[p] || old_pit[p] || mask[p]) continue;
      mask[p] = 1;
      const auto rgb = tex.at(static_cast<double>(p % size), static_cast<double>(p / size), noise[p]);
      for (int c = 0; c < 3; ++c) b[p * 3 + c] = rgb[c];
    }
  }

  SyntheticPair out;
  out.a.resize(a.size());
  out.b.resize(b.size());
  out.mask.resize(mask.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.a[i] = to_byte(a[i]);
    out.b[i] = to_byte(b[i]);
  }
  for (std::size_t p = 0; p < mask.size(); ++p) out.mask[p] = mask[p] ? 255 : 0;
  return out;
}

std::string numbered(const char* prefix, std::int64_t value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04lld", prefix, static_cast<long long>(value));
  return buf;
}

}  // namespace

SplitManifest generate_synthetic_dataset(const fs::path& root, const SyntheticOptions& options) {
  if (options.num_pairs < 1) throw ArgumentError("synthetic dataset needs at least one pair");
  if (options.size < 1) throw ArgumentError("synthetic image size must be positive");
  if (!(options.change_fraction > 0.0 && options.change_fraction < 1.0)) {
    throw ArgumentError("change_fraction must lie in (0, 1)");
  }
  const std::int64_t n_sites = options.num_sites > 0 ? options.num_sites : options.num_pairs;
  if (n_sites > options.num_pairs) {
    throw ArgumentError("num_sites cannot exceed num_pairs");
  }

  SiteCatalog catalog;
  for (std::int64_t i = 0; i < options.num_pairs; ++i) {
    const std::int64_t site = i * n_sites / options.num_pairs;
    const std::string site_id = numbered("site", site);
    const std::string patch_id = numbered("patch", i);
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(i)));
    const auto pair = synthesize(rng, options.size, options.change_fraction);

    const fs::path dir = root / site_id / patch_id;
    write_png(dir / "A.png", {options.size, options.size, 3, pair.a});
    write_png(dir / "B.png", {options.size, options.size, 3, pair.b});
    write_png(dir / "mask.png", {options.size, options.size, 1, pair.mask});
    catalog[site_id].push_back(patch_id);
  }
  auto manifest = make_split_manifest(catalog, options.ratios, options.seed);
  write_manifest(root, catalog, manifest);
  return manifest;
}

// ---------------------------------------------------------------------------
// Batching

BatchIterator::BatchIterator(std::vector<PatchRef> items, std::int64_t batch_size, bool shuffle,
                             std::uint64_t seed)
    : items_(std::move(items)), batch_size_(batch_size), shuffle_(shuffle), seed_(seed) {
  if (items_.empty()) throw ArgumentError("cannot batch an empty split");
  if (batch_size_ < 1) throw ArgumentError("batch_size must be positive");
}

std::size_t BatchIterator::batches_per_epoch() const {
  const auto b = static_cast<std::size_t>(batch_size_);
  return (items_.size() + b - 1) / b;
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch_indices(std::uint64_t epoch) const {
  std::vector<std::size_t> order;
  if (shuffle_) {
    order = seeded_permutation(items_.size(), mix_seed(seed_, epoch));
  } else {
    order.resize(items_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  }
  std::vector<std::vector<std::size_t>> batches;
  const auto b = static_cast<std::size_t>(batch_size_);
  for (std::size_t start = 0; start < order.size(); start += b) {
    const std::size_t end = std::min(order.size(), start + b);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::vector<PatchRef>> BatchIterator::epoch(std::uint64_t epoch) const {
  std::vector<std::vector<PatchRef>> out;
  for (const auto& idx : epoch_indices(epoch)) {
    auto& batch = out.emplace_back();
    for (auto i : idx) batch.push_back(items_[i]);
  }
  return out;
}

BatchIterator batch_iterator(const SplitManifest& manifest, const std::string& split,
                             std::int64_t batch_size, bool shuffle, std::uint64_t seed) {
  return BatchIterator(manifest.split(parse_split(split)), batch_size, shuffle, seed);
}

Batch stack_batch(const std::vector<SamplePair>& samples, const std::vector<std::size_t>& indices,
                  DType dtype) {
  if (indices.empty()) throw ArgumentError("empty batch");
  const auto& first = samples.at(indices.front());
  const std::int64_t h = first.mask.dim(0), w = first.mask.dim(1);
  const auto n = static_cast<std::int64_t>(indices.size());
  Batch out{Tensor({n, 3, h, w}, dtype), Tensor({n, 3, h, w}, dtype), Tensor({n, 1, h, w}, dtype)};
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto a = out.image_a.values<T>();
    auto b = out.image_b.values<T>();
    auto m = out.mask.values<T>();
    for (std::int64_t k = 0; k < n; ++k) {
      const auto& s = samples.at(indices[static_cast<std::size_t>(k)]);
      if (s.mask.dim(0) != h || s.mask.dim(1) != w) {
        throw ShapeError("batch samples differ in spatial size");
      }
      const auto sa = s.image_a.values<float>();
      const auto sb = s.image_b.values<float>();
      const auto sm = s.mask.values<float>();
      std::copy(sa.begin(), sa.end(), a.begin() + k * 3 * h * w);
      std::copy(sb.begin(), sb.end(), b.begin() + k * 3 * h * w);
      std::copy(sm.begin(), sm.end(), m.begin() + k * h * w);
    }
  });
  return out;
}

Dataset::Dataset(fs::path root) : root_(std::move(root)) {
  manifest_ = read_manifest(root_, &catalog_);
}

std::vector<SamplePair> Dataset::load_split(Split split) const {
  const auto& refs = manifest_.split(split);
  std::vector<SamplePair> out(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    out[i] = load_sample(root_, refs[i].site_id, refs[i].patch_id);
  }
  return out;
}

}  // namespace mncd

/* Copyright 2026 The mmdnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmdnet/errors.hpp"
#include "mmdnet/image_io.hpp"
#include "mmdnet/ops.hpp"
#include "mmdnet/tensor.hpp"

namespace mmdnet {

enum class Domain { source, target };
/// Class index doubles as the one-hot position.
enum class Label : std::size_t { diseased = 0, healthy = 1 };

inline constexpr std::size_t kNumLabels = 2;
inline constexpr std::array<Label, kNumLabels> kLabels{Label::diseased, Label::healthy};

inline const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
inline const char* to_string(Label l) { return l == Label::diseased ? "diseased" : "healthy"; }

struct ManifestEntry {
  std::filesystem::path path;
  Label label;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  Domain domain = Domain::source;
  std::vector<ManifestEntry> entries;

  std::size_t count(Label label) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.label == label; }));
  }
  std::size_t size() const { return entries.size(); }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct DomainManifests {
  DatasetManifest source;
  DatasetManifest target;
};

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Reads `<root>/<domain>/<label>/*.{png,jpg,jpeg}` for one domain. Entries
/// are sorted by path.
inline DatasetManifest scan_domain(const std::filesystem::path& root, Domain domain) {
  namespace fs = std::filesystem;
  DatasetManifest m{domain, {}};
  for (Label label : kLabels) {
    const fs::path dir = root / to_string(domain) / to_string(label);
    if (!fs::is_directory(dir)) throw IoError("missing class directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    if (files.empty()) throw IoError("no images in " + dir.string());
    std::sort(files.begin(), files.end());
    for (auto& f : files) m.entries.push_back({std::move(f), label});
  }
  return m;
}

inline DomainManifests scan_dataset(const std::filesystem::path& root) {
  return {scan_domain(root, Domain::source), scan_domain(root, Domain::target)};
}

namespace detail {

inline Rng keyed_rng(std::uint64_t seed, std::uint64_t key, std::uint64_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(salt)};
  return Rng(seq);
}

}  // namespace detail

struct SplitManifests {
  DatasetManifest train;
  DatasetManifest test;
};

/// Stratified split: each label's entries are shuffled by `seed` and the
/// first floor(fraction * count) go to train. Output keeps label-major order.
inline SplitManifests split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction: must be in (0,1), got " + std::to_string(train_fraction));
  }
  SplitManifests out{{manifest.domain, {}}, {manifest.domain, {}}};
  for (Label label : kLabels) {
    std::vector<ManifestEntry> group;
    for (const auto& e : manifest.entries) {
      if (e.label == label) group.push_back(e);
    }
    if (group.size() < 2) {
      throw ConfigError(std::string("split: label '") + to_string(label) + "' has fewer than 2 entries");
    }
    Rng rng = detail::keyed_rng(seed, static_cast<std::uint64_t>(label), 0x5);
    std::shuffle(group.begin(), group.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(group.size())));
    out.train.entries.insert(out.train.entries.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.entries.insert(out.test.entries.end(), group.begin() + static_cast<std::ptrdiff_t>(n_train), group.end());
  }
  return out;
}

/// Decodes images at a fixed side, memoizing up to `budget_bytes`.
/// Thread-safe; decoding is a pure function of the path.
template <typename T>
class ImageLoader {
 public:
  explicit ImageLoader(std::size_t side = kDefaultImageSide, std::size_t budget_bytes = std::size_t{1} << 30)
      : side_(side), budget_(budget_bytes) {}

  std::size_t side() const { return side_; }

  Tensor<T> load(const std::filesystem::path& path) {
    const std::string key = path.string();
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    Tensor<T> img = load_image<T>(path, side_);
    std::lock_guard lock(mutex_);
    const std::size_t bytes = img.size() * sizeof(T);
    if (used_ + bytes <= budget_) {
      used_ += bytes;
      cache_.emplace(key, img);
    }
    return img;
  }

 private:
  std::size_t side_;
  std::size_t budget_;
  std::size_t used_ = 0;
  std::mutex mutex_;
  std::map<std::string, Tensor<T>> cache_;
};

template <typename T>
struct Batch {
  Tensor<T> images;               // [N, side, side, 3], values in [0,1]
  std::optional<Tensor<T>> labels;  // one-hot [N, 2]
  Domain domain = Domain::source;

  std::size_t size() const { return images.dim(0); }
};

/// Lazily decoded batches over a manifest in a fixed order. The order is a
/// seeded shuffle keyed by (seed, epoch), or manifest order when unshuffled.
/// The final partial batch is emitted.
template <typename T>
class BatchStream {
 public:
  BatchStream(const DatasetManifest& manifest, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
              bool with_labels, ImageLoader<T>& loader, bool shuffle = true)
      : manifest_(&manifest), batch_size_(batch_size), with_labels_(with_labels), loader_(&loader) {
    if (batch_size == 0) throw ConfigError("batch_size: must be >= 1");
    order_.resize(manifest.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffle) {
      Rng rng = detail::keyed_rng(seed, epoch, 0xb);
      std::shuffle(order_.begin(), order_.end(), rng);
    }
  }

  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t num_batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
  bool empty() const { return order_.empty(); }
  void reset() { cursor_ = 0; }

  std::optional<Batch<T>> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
    const std::size_t side = loader_->side();
    const std::size_t per_image = side * side * 3;
    std::vector<T> pixels(n * per_image);
    std::vector<T> labels(with_labels_ ? n * kNumLabels : 0, T(0));
    for (std::size_t i = 0; i < n; ++i) {
      const ManifestEntry& e = manifest_->entries[order_[cursor_ + i]];
      Tensor<T> img = loader_->load(e.path);
      for (T v : img.data()) {
        if (!(v >= T(0) && v <= T(1))) throw IoError("pixel outside [0,1] in " + e.path.string());
      }
      std::copy(img.data().begin(), img.data().end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * per_image));
      if (with_labels_) labels[i * kNumLabels + static_cast<std::size_t>(e.label)] = T(1);
    }
    cursor_ += n;
    Batch<T> b{Tensor<T>::unchecked({n, side, side, 3}, std::move(pixels)), std::nullopt, manifest_->domain};
    if (with_labels_) b.labels = Tensor<T>::unchecked({n, kNumLabels}, std::move(labels));
    return b;
  }

 private:
  const DatasetManifest* manifest_;
  std::size_t batch_size_;
  bool with_labels_;
  ImageLoader<T>* loader_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

template <typename T>
BatchStream<T> batches(const DatasetManifest& manifest, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                       bool with_labels, ImageLoader<T>& loader, bool shuffle = true) {
  return BatchStream<T>(manifest, batch_size, seed, epoch, with_labels, loader, shuffle);
}

}  // namespace mmdnet

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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mmdnet/dataset.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/image_io.hpp"

namespace mmdnet {

/// Two-domain toy imaging set. "diseased" images carry a bright soft-edged
/// ellipse on a textured background, "healthy" ones only the background.
/// Both domains share that geometry rule; the target domain differs only in
/// intensity statistics (inversion, brightness offset, stronger noise).
struct SyntheticSpec {
  std::size_t samples_per_class = 200;
  std::size_t side = 64;
  std::uint64_t seed = 0;

  double background_level = 0.2;
  double background_jitter = 0.04;  // per-image level spread, +/-
  double texture_amplitude = 0.06;
  double blob_intensity = 0.5;
  double blob_radius_min = 0.08;  // fraction of side
  double blob_radius_max = 0.16;

  bool invert_target = true;
  double target_offset = -0.1;
  double source_noise = 0.02;
  double target_noise = 0.06;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

inline void validate(const SyntheticSpec& s) {
  if (s.samples_per_class < 2) throw ConfigError("synthetic.samples_per_class: must be >= 2");
  if (s.side < 8) throw ConfigError("synthetic.side: must be >= 8");
  if (!(s.blob_radius_min > 0.0 && s.blob_radius_min <= s.blob_radius_max && s.blob_radius_max < 0.5)) {
    throw ConfigError("synthetic.blob_radius_min/max: need 0 < min <= max < 0.5");
  }
  if (s.background_jitter < 0.0) throw ConfigError("synthetic.background_jitter: must be >= 0");
  if (s.source_noise < 0.0 || s.target_noise < 0.0) throw ConfigError("synthetic noise levels must be >= 0");
}

/// Grayscale intensities in [0,1] for one sample. Deterministic in
/// (spec, domain, label, index).
inline std::vector<double> synthesize_image(const SyntheticSpec& spec, Domain domain, Label label, std::size_t index) {
  const std::size_t side = spec.side;
  const std::uint64_t stream = 2 * static_cast<std::uint64_t>(label) + (domain == Domain::target ? 1 : 0);
  Rng geo = detail::keyed_rng(spec.seed, index, 0x100 + stream);
  Rng noise_rng = detail::keyed_rng(spec.seed, index, 0x200 + stream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  const double level = spec.background_level + spec.background_jitter * (2.0 * unit(geo) - 1.0);
  struct Wave {
    double fx, fy, phase;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 2; ++k) waves.push_back({1.0 + 3.0 * unit(geo), 1.0 + 3.0 * unit(geo), two_pi * unit(geo)});

  const bool blob = label == Label::diseased;
  const double s = static_cast<double>(side);
  const double cx = s * (0.25 + 0.5 * unit(geo)), cy = s * (0.25 + 0.5 * unit(geo));
  const double span = spec.blob_radius_max - spec.blob_radius_min;
  const double rx = s * (spec.blob_radius_min + span * unit(geo));
  const double ry = s * (spec.blob_radius_min + span * unit(geo));
  const double angle = std::numbers::pi * unit(geo);
  const double ca = std::cos(angle), sa = std::sin(angle);

  const double sigma = domain == Domain::source ? spec.source_noise : spec.target_noise;
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);

  std::vector<double> out(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / s, v = (static_cast<double>(y) + 0.5) / s;
      double value = level;
      for (const Wave& w : waves) value += 0.5 * spec.texture_amplitude * std::sin(two_pi * (w.fx * u + w.fy * v) + w.phase);
      if (blob) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        const double px = (ca * dx + sa * dy) / rx, py = (-sa * dx + ca * dy) / ry;
        const double r = std::sqrt(px * px + py * py);
        value += spec.blob_intensity / (1.0 + std::exp((r - 1.0) / 0.12));
      }
      if (domain == Domain::target) {
        if (spec.invert_target) value = 1.0 - value;
        value += spec.target_offset;
      }
      if (sigma > 0.0) value += noise(noise_rng);
      out[y * side + x] = std::clamp(value, 0.0, 1.0);
    }
  }
  return out;
}

/// Writes `<out>/<source|target>/<diseased|healthy>/img_NNNN.png` (8-bit gray)
/// and returns the scanned manifests.
inline DomainManifests generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  validate(spec);
  for (Domain domain : {Domain::source, Domain::target}) {
    for (Label label : kLabels) {
      const fs::path dir = out / to_string(domain) / to_string(label);
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
      for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
        const std::vector<double> gray = synthesize_image(spec, domain, label, i);
        Image8 img{spec.side, spec.side, 1, std::vector<std::uint8_t>(gray.size())};
        for (std::size_t p = 0; p < gray.size(); ++p) {
          img.pixels[p] = static_cast<std::uint8_t>(std::lround(gray[p] * 255.0));
        }
        char name[32];
        std::snprintf(name, sizeof name, "img_%04zu.png", i);
        write_png(dir / name, img);
      }
    }
  }
  return scan_dataset(out);
}

}  // namespace mmdnet

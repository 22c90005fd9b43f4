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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mmdnet/errors.hpp"
#include "mmdnet/losses.hpp"
#include "mmdnet/model.hpp"
#include "mmdnet/synthetic.hpp"
#include "mmdnet/train.hpp"

namespace mmdnet {

using json = nlohmann::json;

struct DatasetRoot {
  std::filesystem::path root;
  std::size_t image_side = kDefaultImageSide;

  friend bool operator==(const DatasetRoot&, const DatasetRoot&) = default;
};

using DataSource = std::variant<SyntheticSpec, DatasetRoot>;

enum class Precision { float32, float64 };

/// One fully resolved training run.
struct RunSpec {
  std::string name;
  ModelConfig model;
  TrainConfig train;
  DataSource data = SyntheticSpec{};
  double train_fraction = 0.8;
  Precision precision = Precision::float32;
  std::filesystem::path output_dir;  // set by the runner
};

inline std::size_t image_side(const DataSource& d) {
  return std::visit([](const auto& s) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(s)>, SyntheticSpec>) {
      return s.side;
    } else {
      return s.image_side;
    }
  }, d);
}

namespace detail {

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg); }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string& k) const { return obj_.contains(k); }
  const json& at(const std::string& k) const { return obj_.at(k); }

  void number(const std::string& k, double& out) {
    if (!take(k)) return;
    if (!obj_[k].is_number()) fail(key(k), "expected a number");
    out = obj_[k].get<double>();
  }

  template <typename U>
  void count(const std::string& k, U& out) {
    if (!take(k)) return;
    const json& v = obj_[k];
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(key(k), "expected a non-negative integer");
    out = static_cast<U>(v.get<std::uint64_t>());
  }

  void boolean(const std::string& k, bool& out) {
    if (!take(k)) return;
    if (!obj_[k].is_boolean()) fail(key(k), "expected true or false");
    out = obj_[k].get<bool>();
  }

  void string(const std::string& k, std::string& out) {
    if (!take(k)) return;
    if (!obj_[k].is_string()) fail(key(k), "expected a string");
    out = obj_[k].get<std::string>();
  }

  template <typename U>
  void list(const std::string& k, std::vector<U>& out) {
    if (!take(k)) return;
    const json& v = obj_[k];
    if (!v.is_array()) fail(key(k), "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if constexpr (std::is_integral_v<U>) {
        if (!v[i].is_number_integer() || v[i].get<std::int64_t>() < 0) {
          fail(key(k) + "[" + std::to_string(i) + "]", "expected a non-negative integer");
        }
      } else if (!v[i].is_number()) {
        fail(key(k) + "[" + std::to_string(i) + "]", "expected a number");
      }
      out.push_back(v[i].get<U>());
    }
  }

  bool take(const std::string& k) {
    if (!obj_.contains(k)) return false;
    seen_.insert(k);
    return true;
  }

  /// Strict schema: any key not consumed is an error.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) fail(key(it.key()), "unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& key, const std::string& value,
             std::initializer_list<std::pair<const char*, E>> options) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(key + ": '" + value + "' is not one of {" + allowed + "}");
}

inline SyntheticSpec parse_synthetic(const json& obj, const std::string& path, std::uint64_t default_seed) {
  SyntheticSpec s;
  s.seed = default_seed;
  Reader r(obj, path);
  r.count("samples_per_class", s.samples_per_class);
  r.count("side", s.side);
  r.count("seed", s.seed);
  r.number("background_level", s.background_level);
  r.number("background_jitter", s.background_jitter);
  r.number("texture_amplitude", s.texture_amplitude);
  r.number("blob_intensity", s.blob_intensity);
  r.number("blob_radius_min", s.blob_radius_min);
  r.number("blob_radius_max", s.blob_radius_max);
  r.boolean("invert_target", s.invert_target);
  r.number("target_offset", s.target_offset);
  r.number("source_noise", s.source_noise);
  r.number("target_noise", s.target_noise);
  r.finish();
  try {
    validate(s);
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + e.what());
  }
  return s;
}

inline DataSource parse_data(const json& v, const std::string& path, std::uint64_t seed,
                             const std::filesystem::path& base_dir) {
  if (v.is_string()) {
    if (v.get<std::string>() != "synthetic") Reader::fail(path, "expected \"synthetic\" or an object");
    SyntheticSpec s;
    s.seed = seed;
    return s;
  }
  Reader r(v, path);
  if (r.has("synthetic") == r.has("root")) Reader::fail(path, "give exactly one of 'synthetic' or 'root'");
  if (r.take("synthetic")) {
    const json& sv = r.at("synthetic");
    DataSource out = parse_synthetic(sv.is_null() ? json::object() : sv, path + ".synthetic", seed);
    r.finish();
    return out;
  }
  DatasetRoot root;
  std::string p;
  r.string("root", p);
  r.count("image_side", root.image_side);
  r.finish();
  root.root = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base_dir / p;
  return root;
}

inline bool valid_run_name(const std::string& name) {
  static const std::regex pattern("[A-Za-z0-9_.-]+");
  return std::regex_match(name, pattern) && name != "." && name != "..";
}

}  // namespace detail

/// Parses one run object. `base_dir` anchors relative dataset roots.
inline RunSpec parse_run(const json& obj, const std::string& path, const std::filesystem::path& base_dir = {}) {
  RunSpec spec;
  detail::Reader r(obj, path);
  if (!r.has("name")) detail::Reader::fail(r.key("name"), "required");
  r.string("name", spec.name);
  if (!detail::valid_run_name(spec.name)) detail::Reader::fail(r.key("name"), "use letters, digits, '_', '-', '.'");

  ModelConfig& m = spec.model;
  r.list("conv_filters", m.conv_filters);
  r.count("feature_units", m.feature_units);
  r.number("dropout_rate", m.dropout_rate);
  r.count("num_classes", m.num_classes);
  r.boolean("deep_head", m.deep_head);
  if (r.take("max_norm_cap")) {
    const json& v = r.at("max_norm_cap");
    if (v.is_null()) {
      m.max_norm.reset();
    } else if (v.is_number()) {
      m.max_norm = v.get<double>();
    } else {
      detail::Reader::fail(r.key("max_norm_cap"), "expected a number or null");
    }
  }

  TrainConfig& t = spec.train;
  r.number("learning_rate", t.adam.learning_rate);
  r.number("beta1", t.adam.beta1);
  r.number("beta2", t.adam.beta2);
  r.number("epsilon", t.adam.epsilon);
  r.count("batch_size", t.batch_size);
  r.count("epochs", t.epochs);
  r.count("seed", t.seed);
  r.number("lambda_max", t.lambda_max);
  r.number("gamma", t.gamma);
  std::string text;
  if (r.has("adapt_on")) {
    r.string("adapt_on", text);
    t.adaptation.adapt_on = detail::parse_enum<AdaptOn>(
        r.key("adapt_on"), text, {{"features", AdaptOn::features}, {"predictions", AdaptOn::predictions}, {"off", AdaptOn::off}});
  }
  if (r.has("estimator")) {
    r.string("estimator", text);
    t.adaptation.estimator = detail::parse_enum<Estimator>(
        r.key("estimator"), text, {{"biased", Estimator::biased}, {"unbiased", Estimator::unbiased}});
  }
  if (r.has("kernel_multipliers") && r.has("kernel_bandwidths")) {
    detail::Reader::fail(r.key("kernel_bandwidths"), "conflicts with kernel_multipliers");
  }
  r.list("kernel_multipliers", t.adaptation.kernel.multipliers);
  if (r.has("kernel_bandwidths")) {
    std::vector<double> sigmas;
    r.list("kernel_bandwidths", sigmas);
    t.adaptation.kernel = KernelSpec::fixed(std::move(sigmas));
  }
  if (r.has("precision")) {
    r.string("precision", text);
    spec.precision = detail::parse_enum<Precision>(r.key("precision"), text,
                                                   {{"float32", Precision::float32}, {"float64", Precision::float64}});
  }
  r.number("train_fraction", spec.train_fraction);
  if (r.take("data")) spec.data = detail::parse_data(r.at("data"), r.key("data"), t.seed, base_dir);
  else std::get<SyntheticSpec>(spec.data).seed = t.seed;
  r.finish();

  m.input_side = image_side(spec.data);
  auto prefixed = [&](auto&& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      throw ConfigError((path.empty() ? "" : path + ".") + e.what());
    }
  };
  prefixed([&] { validate(m); });
  prefixed([&] { validate(t); });
  prefixed([&] {
    if (t.adaptation.kernel.median_heuristic && t.adaptation.kernel.multipliers.empty()) {
      throw ConfigError("kernel_multipliers: need at least one multiplier");
    }
    for (double x : t.adaptation.kernel.median_heuristic ? t.adaptation.kernel.multipliers : t.adaptation.kernel.sigmas) {
      if (!(x > 0.0)) throw ConfigError(std::string(t.adaptation.kernel.median_heuristic ? "kernel_multipliers" : "kernel_bandwidths") + ": must be positive");
    }
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) throw ConfigError("train_fraction: must be in (0,1)");
  });
  return spec;
}

/// Accepts either a single run object or {"runs": [...]} with an optional
/// "defaults" object merged under every run.
inline std::vector<RunSpec> parse_config_json(const json& doc, const std::filesystem::path& base_dir = {}) {
  std::vector<RunSpec> specs;
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  if (!doc.contains("runs")) {
    specs.push_back(parse_run(doc, "", base_dir));
  } else {
    detail::Reader top(doc, "");
    json defaults = json::object();
    if (top.take("defaults")) {
      defaults = top.at("defaults");
      if (!defaults.is_object()) detail::Reader::fail("defaults", "expected an object");
    }
    top.take("runs");
    top.finish();
    const json& runs = doc.at("runs");
    if (!runs.is_array() || runs.empty()) detail::Reader::fail("runs", "expected a non-empty array");
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string path = "runs[" + std::to_string(i) + "]";
      if (!runs[i].is_object()) detail::Reader::fail(path, "expected an object");
      json merged = defaults;
      merged.update(runs[i]);
      specs.push_back(parse_run(merged, path, base_dir));
    }
  }
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second) throw ConfigError("name: duplicate run name '" + s.name + "'");
  }
  return specs;
}

inline std::vector<RunSpec> parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config_json(doc, path.parent_path());
}

/// The six configurations of the reference comparison table: a non-adapted
/// baseline and five feature-MMD variants differing in conv depth/width.
inline std::vector<RunSpec> builtin_table1_sweep(const DataSource& data = SyntheticSpec{}, std::uint64_t seed = 0,
                                                 std::size_t epochs = 30) {
  struct Row {
    const char* name;
    std::vector<std::size_t> filters;
    AdaptOn adapt;
  };
  const std::vector<Row> rows{
      {"fitting", {16, 32}, AdaptOn::off},
      {"mdd_1layer_16", {16}, AdaptOn::features},
      {"mdd_2layer_16_32", {16, 32}, AdaptOn::features},
      {"mdd_3layer_16_32_64", {16, 32, 64}, AdaptOn::features},
      {"mdd_2layer_4_8", {4, 8}, AdaptOn::features},
      {"mdd_2layer_8_16", {8, 16}, AdaptOn::features},
  };
  std::vector<RunSpec> specs;
  for (const Row& row : rows) {
    RunSpec s;
    s.name = row.name;
    s.model.conv_filters = row.filters;
    s.train.adaptation.adapt_on = row.adapt;
    s.train.seed = seed;
    s.train.epochs = epochs;
    s.data = data;
    s.model.input_side = image_side(data);
    validate(s.model);
    specs.push_back(std::move(s));
  }
  return specs;
}

inline json to_json(const SyntheticSpec& s) {
  return {{"samples_per_class", s.samples_per_class}, {"side", s.side}, {"seed", s.seed},
          {"background_level", s.background_level}, {"background_jitter", s.background_jitter},
          {"texture_amplitude", s.texture_amplitude},
          {"blob_intensity", s.blob_intensity}, {"blob_radius_min", s.blob_radius_min},
          {"blob_radius_max", s.blob_radius_max}, {"invert_target", s.invert_target},
          {"target_offset", s.target_offset}, {"source_noise", s.source_noise}, {"target_noise", s.target_noise}};
}

/// Resolved run description in the config schema (parse_run accepts it back).
inline json to_json(const RunSpec& s) {
  json j;
  j["name"] = s.name;
  j["conv_filters"] = s.model.conv_filters;
  j["feature_units"] = s.model.feature_units;
  j["dropout_rate"] = s.model.dropout_rate;
  j["num_classes"] = s.model.num_classes;
  j["deep_head"] = s.model.deep_head;
  j["max_norm_cap"] = s.model.max_norm ? json(*s.model.max_norm) : json(nullptr);
  j["learning_rate"] = s.train.adam.learning_rate;
  j["beta1"] = s.train.adam.beta1;
  j["beta2"] = s.train.adam.beta2;
  j["epsilon"] = s.train.adam.epsilon;
  j["batch_size"] = s.train.batch_size;
  j["epochs"] = s.train.epochs;
  j["seed"] = s.train.seed;
  j["adapt_on"] = to_string(s.train.adaptation.adapt_on);
  j["estimator"] = to_string(s.train.adaptation.estimator);
  if (s.train.adaptation.kernel.median_heuristic) {
    j["kernel_multipliers"] = s.train.adaptation.kernel.multipliers;
  } else {
    j["kernel_bandwidths"] = s.train.adaptation.kernel.sigmas;
  }
  j["lambda_max"] = s.train.lambda_max;
  j["gamma"] = s.train.gamma;
  j["precision"] = s.precision == Precision::float32 ? "float32" : "float64";
  j["train_fraction"] = s.train_fraction;
  if (const auto* syn = std::get_if<SyntheticSpec>(&s.data)) {
    j["data"] = {{"synthetic", to_json(*syn)}};
  } else {
    const auto& root = std::get<DatasetRoot>(s.data);
    j["data"] = {{"root", root.root.string()}, {"image_side", root.image_side}};
  }
  return j;
}

}  // namespace mmdnet

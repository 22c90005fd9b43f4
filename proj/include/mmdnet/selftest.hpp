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

// Quick in-binary sanity pass: gradient checks, MMD/Adam oracles and the
// shape chain. A smaller cousin of the acceptance suite.

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmdnet/adam.hpp"
#include "mmdnet/config.hpp"
#include "mmdnet/model.hpp"
#include "mmdnet/testing/oracles.hpp"
#include "mmdnet/testing/suites.hpp"

namespace mmdnet {

inline bool run_selftest(std::ostream& out, std::size_t seeds = 10) {
  bool ok = true;
  auto sci = [](double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
  };
  auto line = [&](bool pass, const std::string& what) {
    out << (pass ? "PASS " : "FAIL ") << what << '\n';
    ok = ok && pass;
  };

  for (const auto& o : testing::gradient_suite(seeds))
    line(o.worst < 1e-4, "gradcheck " + o.name + " worst=" + sci(o.worst));

  const auto m = testing::mmd_oracle_suite(4 * seeds);
  line(m.worst_biased < 1e-10 && m.worst_unbiased < 1e-10, "mmd2 vs brute force");
  line(m.worst_self < 1e-12 && m.most_negative_biased >= -1e-12, "mmd2 self-distance and sign");

  {
    Parameter<double> p{"theta", Tensor<double>({1}, {1.0}), {}};
    AdamState<double> state;
    testing::ScalarAdam ref;
    double theta = 1.0, worst = 0.0;
    for (int step = 0; step < 50; ++step) {
      p.grad = {2.0 * p.value[0]};
      adam_step(std::span<Parameter<double>>(&p, 1), state, AdamConfig{});
      theta = ref.step(theta, 2.0 * theta);
      worst = std::max(worst, std::abs(theta - p.value[0]));
    }
    line(worst <= 1e-12, "adam vs scalar oracle");
  }

  bool shapes = true;
  for (const RunSpec& spec : builtin_table1_sweep(DatasetRoot{"", 224})) {
    const auto ref = testing::count_parameters(224, 3, spec.model.conv_filters, spec.model.feature_units,
                                               spec.model.num_classes);
    shapes = shapes && flatten_dim(spec.model) == ref.flatten &&
             build_model<float>(spec.model, 0).parameter_count() == ref.total;
  }
  line(shapes, "table configurations: flatten dims and parameter counts");
  return ok;
}

}  // namespace mmdnet

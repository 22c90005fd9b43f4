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

// Everything.

#include "mmdnet/adam.hpp"
#include "mmdnet/autodiff.hpp"
#include "mmdnet/config.hpp"
#include "mmdnet/conv.hpp"
#include "mmdnet/csv.hpp"
#include "mmdnet/dataset.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/gradcheck.hpp"
#include "mmdnet/image_io.hpp"
#include "mmdnet/losses.hpp"
#include "mmdnet/model.hpp"
#include "mmdnet/ops.hpp"
#include "mmdnet/platform.hpp"
#include "mmdnet/runner.hpp"
#include "mmdnet/synthetic.hpp"
#include "mmdnet/tensor.hpp"
#include "mmdnet/train.hpp"

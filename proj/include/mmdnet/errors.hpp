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

#include <stdexcept>
#include <string>

namespace mmdnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or size contract violated (construction, op arguments).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up in a forward value or a gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value; the message names the offending key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, decoded or written; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmdnet

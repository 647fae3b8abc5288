// Copyright 2026 The evipan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace evipan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EVIPAN_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

// Data errors.
EVIPAN_DEFINE_ERROR(IoError);
EVIPAN_DEFINE_ERROR(FormatError);
EVIPAN_DEFINE_ERROR(ShapeMismatchError);
EVIPAN_DEFINE_ERROR(EmptySceneError);

// Configuration errors.
EVIPAN_DEFINE_ERROR(SpecError);
EVIPAN_DEFINE_ERROR(ConfigError);

// Numerical / contract errors.
EVIPAN_DEFINE_ERROR(NumericalError);
EVIPAN_DEFINE_ERROR(DomainError);
EVIPAN_DEFINE_ERROR(EmptyMaskError);
EVIPAN_DEFINE_ERROR(OutOfBoundsError);
EVIPAN_DEFINE_ERROR(MissingPrototypeError);
EVIPAN_DEFINE_ERROR(EmptyInstanceError);

#undef EVIPAN_DEFINE_ERROR

}  // namespace evipan

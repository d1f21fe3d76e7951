/*
 * Copyright 2026 The pcal Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCAL_ERRORS_HPP
#define PCAL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pcal {

// Base of every error raised by the library. The CLI maps IoError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

#define PCAL_DEFINE_ERROR(Name)   \
  class Name : public Error {     \
   public:                        \
    using Error::Error;           \
  }

PCAL_DEFINE_ERROR(NonFiniteLogit);
PCAL_DEFINE_ERROR(DomainError);
PCAL_DEFINE_ERROR(DimensionMismatch);
PCAL_DEFINE_ERROR(EmptyScan);
PCAL_DEFINE_ERROR(EmptyBatch);
PCAL_DEFINE_ERROR(NonPositiveAlpha);
PCAL_DEFINE_ERROR(NonPositiveScale);
PCAL_DEFINE_ERROR(DegenerateSplit);
PCAL_DEFINE_ERROR(TooFewPositives);
PCAL_DEFINE_ERROR(FormatError);
PCAL_DEFINE_ERROR(ValidationError);

#undef PCAL_DEFINE_ERROR

}  // namespace pcal

#endif  // PCAL_ERRORS_HPP

// Copyright 2026 The claip-emo Authors. All Rights Reserved.
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

namespace claip {

// Base of every error thrown by the library. kind() is a stable, single-word
// class name that the command-line tool prints for machine parsing.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CLAIP_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

CLAIP_DEFINE_ERROR(ShapeError);
CLAIP_DEFINE_ERROR(AxisError);
CLAIP_DEFINE_ERROR(StateError);
CLAIP_DEFINE_ERROR(ConfigError);
CLAIP_DEFINE_ERROR(NumericError);
CLAIP_DEFINE_ERROR(AudioError);
CLAIP_DEFINE_ERROR(DataError);
CLAIP_DEFINE_ERROR(IoError);
CLAIP_DEFINE_ERROR(FoldLeakageError);
CLAIP_DEFINE_ERROR(CheckpointFormatError);
CLAIP_DEFINE_ERROR(CheckpointShapeError);
CLAIP_DEFINE_ERROR(CheckpointTruncatedError);
CLAIP_DEFINE_ERROR(CheckpointChecksumError);
CLAIP_DEFINE_ERROR(CheckpointMissingError);

#undef CLAIP_DEFINE_ERROR

}  // namespace claip

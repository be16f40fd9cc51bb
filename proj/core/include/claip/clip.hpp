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

#include <string>

#include "claip/audio.hpp"
#include "claip/tensor.hpp"

namespace claip {

// One labeled audiovisual clip: frames [T, H, W, C] in [0, 1] and a mono
// waveform in [-1, 1].
struct ClipSample {
  std::string id;
  Tensor<float> frames;
  audio::Waveform waveform;
  int label = 0;
};

}  // namespace claip

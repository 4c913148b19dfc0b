// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "geoadapt/tensor.hpp"

namespace geoadapt {

/// One scene: RGB image [3 x H x W] in [0,1], elevation [1 x H x W], the
/// temporal stack (oldest first, last frame equal to the image) and labels.
struct Sample {
  Tensor image;
  Tensor dem;
  std::vector<Tensor> frames;
  std::vector<int> labels;
  std::uint64_t seed = 0;
};

}  // namespace geoadapt

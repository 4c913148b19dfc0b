// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "geoadapt/attention.hpp"
#include "geoadapt/autodiff.hpp"
#include "geoadapt/checkpoint.hpp"
#include "geoadapt/config.hpp"
#include "geoadapt/efficiency.hpp"
#include "geoadapt/encoder.hpp"
#include "geoadapt/errors.hpp"
#include "geoadapt/experiments.hpp"
#include "geoadapt/geodata.hpp"
#include "geoadapt/gradcheck.hpp"
#include "geoadapt/kernels.hpp"
#include "geoadapt/mask_decoder.hpp"
#include "geoadapt/metrics.hpp"
#include "geoadapt/model.hpp"
#include "geoadapt/model_config.hpp"
#include "geoadapt/ops.hpp"
#include "geoadapt/optim.hpp"
#include "geoadapt/params.hpp"
#include "geoadapt/plot.hpp"
#include "geoadapt/rng.hpp"
#include "geoadapt/sample.hpp"
#include "geoadapt/scale_fusion.hpp"
#include "geoadapt/temporal_prompt.hpp"
#include "geoadapt/tensor.hpp"
#include "geoadapt/terrain_adapter.hpp"
#include "geoadapt/train.hpp"
#include "geoadapt/tsr.hpp"

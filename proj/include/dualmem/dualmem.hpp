// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dualmem/error.hpp"
#include "dualmem/core.hpp"
#include "dualmem/corpus_io.hpp"
#include "dualmem/stats.hpp"
#include "dualmem/memory.hpp"
#include "dualmem/consolidation.hpp"
#include "dualmem/pipeline.hpp"
#include "dualmem/evaluation.hpp"
#include "dualmem/synth.hpp"

namespace dualmem {
inline constexpr const char* kVersion = "0.1.0";
}  // namespace dualmem

// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "eduqa/numerics/ops.hpp"
#include "eduqa/numerics/tape.hpp"
#include "eduqa/numerics/tensor.hpp"

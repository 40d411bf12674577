// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bimatch/numkernel/adam.hpp"
#include "bimatch/numkernel/attention.hpp"
#include "bimatch/numkernel/checkpoint.hpp"
#include "bimatch/numkernel/gradcheck.hpp"
#include "bimatch/numkernel/ops.hpp"
#include "bimatch/numkernel/schedule.hpp"
#include "bimatch/numkernel/tensor.hpp"

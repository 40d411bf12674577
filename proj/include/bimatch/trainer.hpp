// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bimatch/trainer/config.hpp"
#include "bimatch/trainer/experiments.hpp"
#include "bimatch/trainer/gradsuite.hpp"
#include "bimatch/trainer/model.hpp"
#include "bimatch/trainer/plot.hpp"
#include "bimatch/trainer/train.hpp"

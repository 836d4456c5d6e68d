// Copyright 2026 The shiftcomp Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include "shiftcomp/rng.hpp"
#include "shiftcomp/stats.hpp"
#include "shiftcomp/compressors.hpp"
#include "shiftcomp/datagen.hpp"
#include "shiftcomp/problems.hpp"
#include "shiftcomp/shifts.hpp"
#include "shiftcomp/algorithms.hpp"
#include "shiftcomp/harness.hpp"
#include "shiftcomp/config.hpp"
#include "shiftcomp/output.hpp"
#include "shiftcomp/verify.hpp"

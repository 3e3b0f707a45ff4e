// Copyright 2026 The RTA Authors.
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

#include "rta/adapt.hpp"
#include "rta/autodiff.hpp"
#include "rta/catalog.hpp"
#include "rta/checkpoint.hpp"
#include "rta/common.hpp"
#include "rta/config.hpp"
#include "rta/data.hpp"
#include "rta/eval.hpp"
#include "rta/lm.hpp"
#include "rta/metrics.hpp"
#include "rta/nn.hpp"
#include "rta/recsys.hpp"
#include "rta/reindex.hpp"
#include "rta/rng.hpp"
#include "rta/tokenizer.hpp"
#include "rta/trainer.hpp"
#include "rta/world.hpp"

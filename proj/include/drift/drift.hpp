// Copyright 2026 The DRIFT Toolkit Authors
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


// Umbrella header.

#pragma once

#include "drift/checkpoint.hpp"
#include "drift/divergence.hpp"
#include "drift/error.hpp"
#include "drift/example.hpp"
#include "drift/experiment.hpp"
#include "drift/merge.hpp"
#include "drift/model.hpp"
#include "drift/optim.hpp"
#include "drift/parameter_set.hpp"
#include "drift/rng.hpp"
#include "drift/tasks.hpp"
#include "drift/taxonomy.hpp"
#include "drift/tensor.hpp"
#include "drift/trainer.hpp"

// Copyright 2026 The jna Authors
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

#include "jna/attention.hpp"
#include "jna/checkpoint.hpp"
#include "jna/data.hpp"
#include "jna/experiment.hpp"
#include "jna/gradcheck.hpp"
#include "jna/gru.hpp"
#include "jna/loss.hpp"
#include "jna/matrix.hpp"
#include "jna/model.hpp"
#include "jna/param.hpp"
#include "jna/rng.hpp"
#include "jna/synthetic.hpp"
#include "jna/train.hpp"

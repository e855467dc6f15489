// Copyright 2026 the voxfv authors
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

#ifndef VOXFV_VOXFV_HPP_
#define VOXFV_VOXFV_HPP_

#include "voxfv/audio.hpp"
#include "voxfv/augment.hpp"
#include "voxfv/common.hpp"
#include "voxfv/corpus.hpp"
#include "voxfv/dsp.hpp"
#include "voxfv/eval.hpp"
#include "voxfv/fisher.hpp"
#include "voxfv/frontend.hpp"
#include "voxfv/gmm.hpp"
#include "voxfv/io.hpp"
#include "voxfv/pipeline.hpp"
#include "voxfv/rng.hpp"
#include "voxfv/svm.hpp"
#include "voxfv/tdnn.hpp"
#include "voxfv/types.hpp"

#endif  // VOXFV_VOXFV_HPP_

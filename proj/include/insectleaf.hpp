// Copyright 2026 The insectleaf Authors. All Rights Reserved.
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

#include "insectleaf/augment.hpp"
#include "insectleaf/chunking.hpp"
#include "insectleaf/config.hpp"
#include "insectleaf/csv.hpp"
#include "insectleaf/dataset.hpp"
#include "insectleaf/error.hpp"
#include "insectleaf/eval/drift.hpp"
#include "insectleaf/eval/metrics.hpp"
#include "insectleaf/feature_map.hpp"
#include "insectleaf/fft.hpp"
#include "insectleaf/leaf/frontend.hpp"
#include "insectleaf/leaf/params.hpp"
#include "insectleaf/leaf/pcen.hpp"
#include "insectleaf/log.hpp"
#include "insectleaf/mel.hpp"
#include "insectleaf/nn/backend.hpp"
#include "insectleaf/nn/checkpoint.hpp"
#include "insectleaf/nn/layers.hpp"
#include "insectleaf/parallel.hpp"
#include "insectleaf/pipeline.hpp"
#include "insectleaf/resample.hpp"
#include "insectleaf/rng.hpp"
#include "insectleaf/synth.hpp"
#include "insectleaf/train/early_stopping.hpp"
#include "insectleaf/train/examples.hpp"
#include "insectleaf/train/model.hpp"
#include "insectleaf/train/optimizer.hpp"
#include "insectleaf/train/trainer.hpp"
#include "insectleaf/wav.hpp"

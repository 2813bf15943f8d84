// Copyright 2026 The Pipecut Authors
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

#ifndef PIPECUT_GENERATORS_H_
#define PIPECUT_GENERATORS_H_

#include "pipecut/graph.h"

namespace pipecut {

// Transformer encoder with a tied-embedding masked-LM head. Each encoder
// layer has 14 tasks (q/k/v projections, attention, MLP, two layer norms).
// The vocabulary projection is a single task. Throws InvalidArgs when any
// argument is not positive.
TaskGraph GenBertLike(int hidden, int layers, int seq_len, int vocab,
                      int bytes_per_element = 4);

// Bottleneck ResNet (v1.5 strides) with every filter count multiplied by
// `width_factor`. Supported depths are 50, 101 and 152; anything else throws
// UnsupportedDepth.
TaskGraph GenResnetLike(int layers, int width_factor, int image_size = 224,
                        int num_classes = 1000, int bytes_per_element = 4);

}  // namespace pipecut

#endif  // PIPECUT_GENERATORS_H_

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

#include "pipecut/generators.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <initializer_list>
#include <string>

#include "pipecut/errors.h"

namespace pipecut {
namespace {

class Builder {
 public:
  explicit Builder(int bytes_per_element) : elem_(bytes_per_element) {}

  std::string Param(const std::string& id, std::int64_t elements) {
    nodes_.push_back({id, ValueInfo{elements * elem_, 0, true}});
    return id;
  }

  std::string Input(const std::string& id, std::int64_t elements_per_sample) {
    nodes_.push_back({id, ValueInfo{0, elements_per_sample * elem_, false}});
    inputs_.push_back(id);
    return id;
  }

  // Adds a task producing a single value "<id>:out". Returns the value id.
  std::string Task(const std::string& id, const std::string& op, double flops,
                   std::initializer_list<std::string> ins,
                   std::int64_t out_elements_per_sample,
                   std::int64_t out_fixed_elements = 0) {
    nodes_.push_back({id, TaskInfo{op, flops, {}}});
    for (const auto& in : ins) edges_.push_back({in, id});
    std::string out = id + ":out";
    nodes_.push_back(
        {out, ValueInfo{out_fixed_elements * elem_, out_elements_per_sample * elem_, false}});
    edges_.push_back({id, out});
    return out;
  }

  void Output(const std::string& id) { outputs_.push_back(id); }

  TaskGraph Finish() {
    return TaskGraph::Build(std::move(nodes_), std::move(edges_),
                            std::move(inputs_), std::move(outputs_));
  }

 private:
  int elem_;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<NodeId> inputs_;
  std::vector<NodeId> outputs_;
};

std::string Prefix(const char* fmt, int a, int b = 0) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

}  // namespace

TaskGraph GenBertLike(int hidden, int layers, int seq_len, int vocab,
                      int bytes_per_element) {
  if (hidden <= 0 || layers <= 0 || seq_len <= 0 || vocab <= 0 ||
      bytes_per_element <= 0) {
    throw InvalidArgs("bert generator arguments must be positive");
  }
  const std::int64_t h = hidden, s = seq_len, v = vocab;
  const std::int64_t heads = std::max<std::int64_t>(1, h / 64);
  const double sh = static_cast<double>(s * h);
  Builder b(bytes_per_element);

  std::string ids = b.Input("input_ids", s);
  std::string labels = b.Input("labels", s);

  std::string word = b.Param("emb.word.w", v * h);
  std::string x = b.Task("emb.lookup", "gather", sh, {ids, word}, s * h);
  x = b.Task("emb.add", "add", 2 * sh,
             {x, b.Param("emb.pos.w", s * h), b.Param("emb.type.w", 2 * h)},
             s * h);
  x = b.Task("emb.ln", "layernorm", 8 * sh,
             {x, b.Param("emb.ln.g", h), b.Param("emb.ln.b", h)}, s * h);

  auto linear = [&](const std::string& id, const std::string& in,
                    std::int64_t fan_in, std::int64_t fan_out) {
    return b.Task(id, "linear", 2.0 * s * fan_in * fan_out,
                  {in, b.Param(id + ".w", fan_in * fan_out),
                   b.Param(id + ".b", fan_out)},
                  s * fan_out);
  };
  auto layernorm = [&](const std::string& id, const std::string& in) {
    return b.Task(id, "layernorm", 8 * sh,
                  {in, b.Param(id + ".g", h), b.Param(id + ".b", h)}, s * h);
  };

  for (int layer = 0; layer < layers; ++layer) {
    const std::string p = Prefix("l%03d.", layer);
    std::string q = linear(p + "q", x, h, h);
    std::string k = linear(p + "k", x, h, h);
    std::string val = linear(p + "v", x, h, h);
    std::string scores =
        b.Task(p + "scores", "batch_matmul", 2.0 * s * s * h, {q, k}, heads * s * s);
    std::string probs = b.Task(p + "softmax", "softmax", 5.0 * heads * s * s,
                               {scores}, heads * s * s);
    std::string ctx =
        b.Task(p + "context", "batch_matmul", 2.0 * s * s * h, {probs, val}, s * h);
    std::string attn = linear(p + "attn_out", ctx, h, h);
    std::string res1 = b.Task(p + "res1", "add", sh, {attn, x}, s * h);
    std::string ln1 = layernorm(p + "ln1", res1);
    std::string fc1 = linear(p + "fc1", ln1, h, 4 * h);
    std::string act = b.Task(p + "gelu", "gelu", 32 * sh, {fc1}, 4 * s * h);
    std::string fc2 = linear(p + "fc2", act, 4 * h, h);
    std::string res2 = b.Task(p + "res2", "add", sh, {fc2, ln1}, s * h);
    x = layernorm(p + "ln2", res2);
  }

  std::string t = linear("head.dense", x, h, h);
  t = b.Task("head.gelu", "gelu", 8 * sh, {t}, s * h);
  t = layernorm("head.ln", t);
  // Tied decoder: the word embedding goes through a constant transpose.
  std::string wt = b.Task("head.decoder_t", "transpose", 0.0, {word}, 0, v * h);
  std::string logits =
      b.Task("head.decoder", "matmul", 2.0 * s * v * h,
             {t, wt, b.Param("head.decoder.b", v)}, s * v);
  std::string loss =
      b.Task("head.loss", "cross_entropy", 5.0 * s * v, {logits, labels}, 1);
  b.Output(loss);
  return b.Finish();
}

TaskGraph GenResnetLike(int layers, int width_factor, int image_size,
                        int num_classes, int bytes_per_element) {
  std::array<int, 4> blocks{};
  switch (layers) {
    case 50:
      blocks = {3, 4, 6, 3};
      break;
    case 101:
      blocks = {3, 4, 23, 3};
      break;
    case 152:
      blocks = {3, 8, 36, 3};
      break;
    default:
      throw UnsupportedDepth("unsupported ResNet depth " + std::to_string(layers) +
                             " (expected 50, 101 or 152)");
  }
  if (width_factor <= 0 || image_size <= 0 || num_classes <= 0 ||
      bytes_per_element <= 0) {
    throw InvalidArgs("resnet generator arguments must be positive");
  }
  Builder b(bytes_per_element);
  const std::int64_t wf = width_factor;

  std::int64_t hw = image_size;
  std::string x = b.Input("image", 3 * hw * hw);
  std::string labels = b.Input("labels", 1);

  auto conv = [&](const std::string& id, const std::string& in, std::int64_t cin,
                  std::int64_t cout, int kernel, int stride, std::int64_t in_hw,
                  std::int64_t& out_hw) {
    out_hw = (in_hw + stride - 1) / stride;
    const std::int64_t kk = static_cast<std::int64_t>(kernel) * kernel;
    return b.Task(id, "conv2d", 2.0 * kk * cin * cout * out_hw * out_hw,
                  {in, b.Param(id + ".w", kk * cin * cout)},
                  cout * out_hw * out_hw);
  };
  auto bn = [&](const std::string& id, const std::string& in, std::int64_t c,
                std::int64_t at_hw) {
    return b.Task(id, "batchnorm", 4.0 * c * at_hw * at_hw,
                  {in, b.Param(id + ".g", c), b.Param(id + ".b", c)},
                  c * at_hw * at_hw);
  };
  auto relu = [&](const std::string& id, const std::string& in, std::int64_t c,
                  std::int64_t at_hw) {
    return b.Task(id, "relu", 1.0 * c * at_hw * at_hw, {in}, c * at_hw * at_hw);
  };

  std::int64_t c = 64 * wf;
  std::int64_t out_hw = 0;
  x = conv("stem.conv", x, 3, c, 7, 2, hw, out_hw);
  hw = out_hw;
  x = bn("stem.bn", x, c, hw);
  x = relu("stem.relu", x, c, hw);
  hw = (hw + 1) / 2;
  x = b.Task("stem.pool", "maxpool", 9.0 * c * hw * hw, {x}, c * hw * hw);

  for (int stage = 0; stage < 4; ++stage) {
    const std::int64_t mid = (64LL << stage) * wf;
    const std::int64_t out_c = 4 * mid;
    for (int blk = 0; blk < blocks[stage]; ++blk) {
      const std::string p = Prefix("s%d.b%02d.", stage + 1, blk);
      const int stride = (blk == 0 && stage > 0) ? 2 : 1;
      std::int64_t h1 = 0, h2 = 0, h3 = 0;
      std::string y = conv(p + "conv1", x, c, mid, 1, 1, hw, h1);
      y = bn(p + "bn1", y, mid, h1);
      y = relu(p + "relu1", y, mid, h1);
      y = conv(p + "conv2", y, mid, mid, 3, stride, h1, h2);
      y = bn(p + "bn2", y, mid, h2);
      y = relu(p + "relu2", y, mid, h2);
      y = conv(p + "conv3", y, mid, out_c, 1, 1, h2, h3);
      y = bn(p + "bn3", y, out_c, h3);
      std::string shortcut = x;
      if (blk == 0) {
        std::int64_t hd = 0;
        shortcut = conv(p + "down.conv", x, c, out_c, 1, stride, hw, hd);
        shortcut = bn(p + "down.bn", shortcut, out_c, hd);
      }
      y = b.Task(p + "add", "add", 1.0 * out_c * h3 * h3, {y, shortcut},
                 out_c * h3 * h3);
      x = relu(p + "relu3", y, out_c, h3);
      c = out_c;
      hw = h3;
    }
  }

  x = b.Task("head.pool", "avgpool", 1.0 * c * hw * hw, {x}, c);
  x = b.Task("head.fc", "linear", 2.0 * c * num_classes,
             {x, b.Param("head.fc.w", c * num_classes),
              b.Param("head.fc.b", num_classes)},
             num_classes);
  x = b.Task("head.loss", "cross_entropy", 5.0 * num_classes, {x, labels}, 1);
  b.Output(x);
  return b.Finish();
}

}  // namespace pipecut

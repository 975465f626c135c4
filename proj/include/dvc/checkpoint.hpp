// Copyright 2026 The n2dvc Authors.
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

// Checkpoint container:
//
//   DVCCKPT <version>\n
//   <manifest byte count>\n
//   manifest:  stage <tag>\n  step <n>\n  meta <key> <value>\n ...
//              config <key>=<value>\n ...  (sorted by key)
//              tensor <name> <rows> <cols> <byte offset> <crc32>\n ...
//   blob:      little-endian float32 arrays, row-major, in table order

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dvc/autograd.hpp"
#include "dvc/nn.hpp"

namespace dvc {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string stage;
  long step = 0;
  std::map<std::string, std::string> meta;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Matrix>> tensors;

  bool has_tensor(const std::string& name) const;
  const Matrix& tensor(const std::string& name) const;
  void set_tensor(const std::string& name, Matrix value);
  const std::string& meta_value(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters go under "<prefix><name>".
void store_params(Checkpoint& ckpt, const std::string& prefix, const ag::ParamStore& ps);
/// Fills an already-constructed store; names and shapes must match exactly.
void restore_params(const Checkpoint& ckpt, const std::string& prefix, ag::ParamStore& ps);

void store_optimizer(Checkpoint& ckpt, const std::string& prefix, const ag::ParamStore& ps,
                     const nn::Adam& opt);
void restore_optimizer(const Checkpoint& ckpt, const std::string& prefix,
                       const ag::ParamStore& ps, nn::Adam& opt);

/// Throws PreconditionError naming the first differing key.
void require_same_config(const std::map<std::string, std::string>& expected,
                         const std::map<std::string, std::string>& actual);

}  // namespace dvc

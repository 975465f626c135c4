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

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace dvc {

using KeyValues = std::map<std::string, std::string>;

/// Typed reads from a key/value block. `finish` rejects keys never read.
class KvReader {
 public:
  KvReader(const KeyValues& kv, std::string section);

  void read(const std::string& key, int& value);
  void read(const std::string& key, long& value);
  void read(const std::string& key, std::uint64_t& value);
  void read(const std::string& key, double& value);
  void read(const std::string& key, bool& value);
  void read(const std::string& key, std::string& value);
  void read(const std::string& key, std::vector<int>& value);
  void read(const std::string& key, std::vector<double>& value);
  void read(const std::string& key, std::vector<std::string>& value);
  void finish() const;

 private:
  const std::string* find(const std::string& key);
  [[noreturn]] void bad(const std::string& key, const std::string& value,
                        const char* expected) const;

  KeyValues kv_;
  std::string section_;
  std::set<std::string> used_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
std::string join(const std::vector<int>& v);
std::string join(const std::vector<double>& v);
std::string join(const std::vector<std::string>& v);

}  // namespace dvc

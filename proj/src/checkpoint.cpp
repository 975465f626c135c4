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

#include "dvc/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dvc/error.hpp"

namespace dvc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, _] : tensors)
    if (n == name) return true;
  return false;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::set_tensor(const std::string& name, Matrix value) {
  for (auto& [n, m] : tensors)
    if (n == name) {
      m = std::move(value);
      return;
    }
  tensors.emplace_back(name, std::move(value));
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint has no meta entry '" + key + "'");
  return it->second;
}

namespace {

std::vector<float> to_floats(const Matrix& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  for (long i = 0; i < m.size(); ++i) out[i] = static_cast<float>(m.data()[i]);
  return out;
}

unsigned long checksum(const char* data, std::size_t n) {
  return crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data),
               static_cast<uInt>(n));
}

bool has_space(const std::string& s) { return s.find_first_of(" \t\n") != std::string::npos; }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (ckpt.stage.empty() || has_space(ckpt.stage))
    throw PreconditionError("checkpoint stage tag must be a single token");
  std::ostringstream manifest;
  manifest << "stage " << ckpt.stage << "\n";
  manifest << "step " << ckpt.step << "\n";
  for (const auto& [k, v] : ckpt.meta) {
    if (has_space(k) || v.find('\n') != std::string::npos)
      throw PreconditionError("bad checkpoint meta entry '" + k + "'");
    manifest << "meta " << k << " " << v << "\n";
  }
  for (const auto& [k, v] : ckpt.config) {
    if (has_space(k) || k.find('=') != std::string::npos || v.find('\n') != std::string::npos)
      throw PreconditionError("bad checkpoint config entry '" + k + "'");
    manifest << "config " << k << "=" << v << "\n";
  }
  std::string blob;
  for (const auto& [name, m] : ckpt.tensors) {
    if (has_space(name)) throw PreconditionError("tensor name '" + name + "' contains spaces");
    const auto f = to_floats(m);
    const char* bytes = reinterpret_cast<const char*>(f.data());
    const std::size_t n = f.size() * sizeof(float);
    manifest << "tensor " << name << " " << m.rows() << " " << m.cols() << " " << blob.size()
             << " " << checksum(bytes, n) << "\n";
    blob.append(bytes, n);
  }
  const std::string text = manifest.str();
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out << "DVCCKPT " << kCheckpointVersion << "\n" << text.size() << "\n" << text;
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic;
  int version = 0;
  std::size_t manifest_size = 0;
  in >> magic >> version >> manifest_size;
  if (magic != "DVCCKPT") throw FormatError(path.string() + " is not a checkpoint");
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  in.get();
  std::string text(manifest_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(manifest_size));
  if (!in) throw FormatError(path.string() + ": truncated manifest");
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto sp = line.find(' ');
    const std::string kind = line.substr(0, sp);
    const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (kind == "stage") {
      ckpt.stage = rest;
    } else if (kind == "step") {
      ckpt.step = std::stol(rest);
    } else if (kind == "meta") {
      const auto s2 = rest.find(' ');
      ckpt.meta[rest.substr(0, s2)] = s2 == std::string::npos ? "" : rest.substr(s2 + 1);
    } else if (kind == "config") {
      const auto eq = rest.find('=');
      if (eq == std::string::npos) throw FormatError(path.string() + ": bad config line");
      ckpt.config[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (kind == "tensor") {
      std::istringstream fields(rest);
      std::string name;
      long rows = 0, cols = 0;
      std::size_t offset = 0;
      unsigned long crc = 0;
      if (!(fields >> name >> rows >> cols >> offset >> crc) || rows < 0 || cols < 0)
        throw FormatError(path.string() + ": bad tensor entry");
      const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(float);
      if (offset + n > blob.size())
        throw FormatError(path.string() + ": tensor '" + name + "' runs past the end of file");
      if (checksum(blob.data() + offset, n) != crc)
        throw FormatError(path.string() + ": checksum mismatch for tensor '" + name + "'");
      std::vector<float> f(static_cast<std::size_t>(rows * cols));
      std::memcpy(f.data(), blob.data() + offset, n);
      Matrix m(rows, cols);
      for (long i = 0; i < m.size(); ++i) m.data()[i] = f[i];
      ckpt.tensors.emplace_back(name, std::move(m));
    } else if (!kind.empty()) {
      throw FormatError(path.string() + ": unknown manifest entry '" + kind + "'");
    }
  }
  return ckpt;
}

void store_params(Checkpoint& ckpt, const std::string& prefix, const ag::ParamStore& ps) {
  for (int i = 0; i < ps.size(); ++i) ckpt.set_tensor(prefix + ps.name(i), ps.value(i));
}

void restore_params(const Checkpoint& ckpt, const std::string& prefix, ag::ParamStore& ps) {
  for (int i = 0; i < ps.size(); ++i) {
    const Matrix& m = ckpt.tensor(prefix + ps.name(i));
    if (m.rows() != ps.value(i).rows() || m.cols() != ps.value(i).cols())
      throw FormatError("checkpoint tensor '" + prefix + ps.name(i) + "' has shape " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                        ", model expects " + std::to_string(ps.value(i).rows()) + "x" +
                        std::to_string(ps.value(i).cols()));
    ps.value(i) = m;
  }
}

void store_optimizer(Checkpoint& ckpt, const std::string& prefix, const ag::ParamStore& ps,
                     const nn::Adam& opt) {
  for (int i = 0; i < ps.size(); ++i) {
    ckpt.set_tensor(prefix + "adam_m." + ps.name(i), opt.first_moments()[i]);
    ckpt.set_tensor(prefix + "adam_v." + ps.name(i), opt.second_moments()[i]);
  }
  ckpt.meta[prefix + "adam_steps"] = std::to_string(opt.steps());
}

void restore_optimizer(const Checkpoint& ckpt, const std::string& prefix,
                       const ag::ParamStore& ps, nn::Adam& opt) {
  for (int i = 0; i < ps.size(); ++i) {
    opt.first_moments()[i] = ckpt.tensor(prefix + "adam_m." + ps.name(i));
    opt.second_moments()[i] = ckpt.tensor(prefix + "adam_v." + ps.name(i));
  }
  opt.set_steps(std::stol(ckpt.meta_value(prefix + "adam_steps")));
}

void require_same_config(const std::map<std::string, std::string>& expected,
                         const std::map<std::string, std::string>& actual) {
  for (const auto& [k, v] : expected) {
    const auto it = actual.find(k);
    if (it == actual.end()) throw PreconditionError("config key '" + k + "' missing at resume");
    if (it->second != v)
      throw PreconditionError("config key '" + k + "' changed at resume: " + v + " vs " +
                              it->second);
  }
  for (const auto& [k, _] : actual)
    if (!expected.contains(k)) throw PreconditionError("unexpected config key '" + k + "'");
}

}  // namespace dvc

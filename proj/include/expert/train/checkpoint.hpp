// Copyright 2026 The EXPERT Authors.
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

// Checkpoint file layout, all integers and floats little-endian:
//
//   "EXPRTCKP"                  8 bytes magic
//   u32 version
//   u64 n, n bytes              JSON header: hyperparams, metadata
//   u64 step
//   u64 n, n bytes              RNG state (textual mt19937_64 state)
//   f64 lr, beta1, beta2, eps   optimizer constants
//   i64 adam step
//   u8  has_moments
//   u32 tensor count
//   per tensor: u32 n, n bytes name; u64 rows; u64 cols
//   payload: every tensor's values (f64), then if has_moments the first
//            moments and the second moments in tensor order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/data/hyperparams.hpp"
#include "expert/model/expert_model.hpp"
#include "expert/numeric/adam.hpp"
#include "json.hpp"

namespace expert::train {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'E', 'X', 'P', 'R',
                                             'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Hyperparams hyperparams;
  nlohmann::json metadata = nlohmann::json::object();
  std::uint64_t step = 0;
  std::string rng_state;
  AdamState adam;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
};

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
inline void put_string(std::ostream& os, const std::string& s, bool wide) {
  if (wide) put<std::uint64_t>(os, s.size());
  else put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void put_values(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CheckpointError("checkpoint truncated");
  }
  return v;
}
inline std::string get_string(std::istream& is, bool wide) {
  const std::uint64_t n = wide ? get<std::uint64_t>(is) : get<std::uint32_t>(is);
  if (n > (1ull << 32)) throw CheckpointError("checkpoint string too long");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw CheckpointError("checkpoint truncated");
  }
  return s;
}
inline void get_values(std::istream& is, Tensor& t) {
  if (t.size() &&
      !is.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)))) {
    throw CheckpointError("checkpoint truncated");
  }
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  nlohmann::json header = {{"hyperparams", c.hyperparams},
                           {"metadata", c.metadata}};
  detail::put_string(os, header.dump(), true);
  detail::put<std::uint64_t>(os, c.step);
  detail::put_string(os, c.rng_state, true);
  detail::put<double>(os, c.adam.config.learning_rate);
  detail::put<double>(os, c.adam.config.beta1);
  detail::put<double>(os, c.adam.config.beta2);
  detail::put<double>(os, c.adam.config.epsilon);
  detail::put<std::int64_t>(os, c.adam.step);
  const bool moments = !c.adam.first_moment.empty();
  if (moments && (c.adam.first_moment.size() != c.tensors.size() ||
                  c.adam.second_moment.size() != c.tensors.size())) {
    throw CheckpointError("optimizer state does not match tensors");
  }
  detail::put<std::uint8_t>(os, moments ? 1 : 0);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.tensors.size()));
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    detail::put_string(os, c.names.at(i), false);
    detail::put<std::uint64_t>(os, c.tensors[i].rows());
    detail::put<std::uint64_t>(os, c.tensors[i].cols());
  }
  for (const auto& t : c.tensors) detail::put_values(os, t);
  if (moments) {
    for (const auto& t : c.adam.first_moment) detail::put_values(os, t);
    for (const auto& t : c.adam.second_moment) detail::put_values(os, t);
  }
  if (!os) throw CheckpointError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(detail::get_string(is, true));
    c.hyperparams = header.at("hyperparams").get<Hyperparams>();
    c.metadata = header.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  c.step = detail::get<std::uint64_t>(is);
  c.rng_state = detail::get_string(is, true);
  c.adam.config.learning_rate = detail::get<double>(is);
  c.adam.config.beta1 = detail::get<double>(is);
  c.adam.config.beta2 = detail::get<double>(is);
  c.adam.config.epsilon = detail::get<double>(is);
  c.adam.step = detail::get<std::int64_t>(is);
  const bool moments = detail::get<std::uint8_t>(is) != 0;
  const auto count = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    c.names.push_back(detail::get_string(is, false));
    const auto rows = detail::get<std::uint64_t>(is);
    const auto cols = detail::get<std::uint64_t>(is);
    if (rows * cols > (1ull << 31)) throw CheckpointError("tensor too large");
    c.tensors.emplace_back(rows, cols);
  }
  for (auto& t : c.tensors) detail::get_values(is, t);
  if (moments) {
    for (const auto& t : c.tensors) c.adam.first_moment.push_back(Tensor::zeros_like(t));
    for (const auto& t : c.tensors) c.adam.second_moment.push_back(Tensor::zeros_like(t));
    for (auto& t : c.adam.first_moment) detail::get_values(is, t);
    for (auto& t : c.adam.second_moment) detail::get_values(is, t);
  }
  return c;
}

// Written to a sibling temporary first, so an interrupted save never
// clobbers the previous file.
inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp + " for writing");
    write_checkpoint(os, c);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

inline Checkpoint capture(const model::ExpertModel& m, const AdamState& adam,
                          std::uint64_t step, const std::string& rng_state,
                          nlohmann::json metadata = nlohmann::json::object()) {
  Checkpoint c;
  c.hyperparams = m.hyperparams();
  c.metadata = std::move(metadata);
  c.step = step;
  c.rng_state = rng_state;
  c.adam = adam;
  for (const auto& p : m.params().named()) {
    c.names.push_back(p.name);
    c.tensors.push_back(p.var.value());
  }
  return c;
}

// Copies tensors into `m` after validating every name and shape, so a
// mismatch leaves the model untouched.
inline void restore(model::ExpertModel& m, const Checkpoint& c) {
  if (!(c.hyperparams == m.hyperparams())) {
    throw CheckpointError("checkpoint hyperparameters differ from the model's");
  }
  auto params = m.params().named();
  if (params.size() != c.tensors.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(c.tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != c.names[i]) {
      throw CheckpointError("tensor " + std::to_string(i) + " is '" + c.names[i] +
                            "', expected '" + params[i].name + "'");
    }
    if (!params[i].var.value().same_shape(c.tensors[i])) {
      throw CheckpointError("shape mismatch for " + c.names[i] + ": " +
                            c.tensors[i].shape_string() + " vs " +
                            params[i].var.value().shape_string());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].var.mutable_value() = c.tensors[i];
}

inline model::ExpertModel model_from_checkpoint(const Checkpoint& c) {
  if (c.tensors.empty()) throw CheckpointError("checkpoint has no tensors");
  model::ExpertModel m(c.hyperparams, c.tensors.front().rows(), 0);
  restore(m, c);
  return m;
}

}  // namespace expert::train

// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Binary checkpoint container.
 *
 * Layout:
 *   "URWK1"                      5 bytes magic
 *   u64 little-endian            header length N
 *   N bytes JSON header          {"meta": {...}, "tensors": [{"name", "shape",
 *                                 "dtype", "offset", "nbytes"}, ...]}
 *   payload                      little-endian tensor data, offsets relative
 *                                to the payload start
 *
 * dtype is "f64" (default, bit-exact) or "f32".
 */

#ifndef URWKV_CHECKPOINT_HPP
#define URWKV_CHECKPOINT_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "urwkv/params.hpp"

namespace urwkv {

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class CheckpointDtype { kF64, kF32 };

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry *find(const std::string &name) const;
};

void save_checkpoint(const std::string &path, const Checkpoint &ckpt,
                     CheckpointDtype dtype = CheckpointDtype::kF64);
Checkpoint load_checkpoint(const std::string &path);

/// Snapshot of a parameter list (values only).
std::vector<CheckpointEntry> snapshot(const ParamList &params);

/// Copies stored values into params, matched by name. Throws naming the
/// first parameter that is missing or has a different shape.
void restore(const Checkpoint &ckpt, const ParamList &params);

} // namespace urwkv

#endif // URWKV_CHECKPOINT_HPP

#pragma once

#include <string>

#include "eg/network.hpp"

namespace eg {

/// Binary checkpoint: "EFGD" magic, u32 LE format version, u64 LE header
/// length, JSON header (layer specs, shapes, seed), then the raw float32
/// parameter and buffer arrays in declaration order (per layer: weight,
/// bias; BatchNorm: gamma, beta, running_mean, running_var).
void save_checkpoint(const Network<float>& net, const std::string& path);

Network<float> load_checkpoint(const std::string& path);

}  // namespace eg

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "feonet/network.hpp"

namespace feonet {

/// A trained network plus what is needed to use it again: the input scale and
/// the experiment settings it was trained under.
struct Checkpoint {
  SparseNetwork<double> net;
  double input_scale = 1.0;
  std::map<std::string, std::string> meta;
};

/// Text header (`snet <N_h> <L> <activation> <c_level>`, `scale`, `meta` lines),
/// the pattern block, then `data` and raw little-endian float64 values and
/// biases per layer. All layers must share one pattern.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace feonet

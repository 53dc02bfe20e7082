#include "feonet/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace feonet {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

void write_doubles(std::ostream& out, const Eigen::VectorXd& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, Eigen::VectorXd& v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::parse_error, "checkpoint data block truncated");
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& net = ckpt.net;
  if (net.layers.empty()) throw Error(ErrorCode::precondition, "cannot checkpoint an empty network");
  const auto& pattern = net.layers.front().pattern;
  for (const auto& layer : net.layers) {
    if (layer.pattern != pattern && !(*layer.pattern == *pattern)) {
      throw Error(ErrorCode::precondition, "checkpoint requires one shared pattern");
    }
  }
  out << "snet " << net.width() << ' ' << net.depth() << ' ' << to_string(net.activation) << ' '
      << pattern->c_level() << '\n';
  out << "scale " << exact(ckpt.input_scale) << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error(ErrorCode::precondition, "checkpoint meta key/value must be single-token/single-line: " + k);
    }
    out << "meta " << k << ' ' << v << '\n';
  }
  write_pattern(out, *pattern);
  out << "data\n";
  for (const auto& layer : net.layers) {
    write_doubles(out, layer.values);
    write_doubles(out, layer.bias);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line, tag;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse_error, "empty checkpoint");
  std::istringstream head(line);
  int n = 0, L = 0, c_level = 0;
  std::string act;
  if (!(head >> tag >> n >> L >> act >> c_level) || tag != "snet" || n < 1 || L < 1) {
    throw Error(ErrorCode::parse_error, "expected 'snet <N_h> <L> <activation> <c_level>' header");
  }
  Checkpoint ckpt;
  ckpt.net.activation = parse_activation(act);
  for (;;) {
    const auto mark = in.tellg();
    if (!std::getline(in, line)) throw Error(ErrorCode::parse_error, "checkpoint ends before pattern block");
    std::istringstream ls(line);
    ls >> tag;
    if (tag == "scale") {
      std::string v;
      ls >> v;
      ckpt.input_scale = std::strtod(v.c_str(), nullptr);
    } else if (tag == "meta") {
      std::string k, v;
      ls >> k;
      std::getline(ls >> std::ws, v);
      ckpt.meta[k] = v;
    } else if (tag == "pat") {
      in.seekg(mark);
      break;
    } else {
      throw Error(ErrorCode::parse_error, "unexpected checkpoint line '" + line + "'");
    }
  }
  auto pattern = std::make_shared<const SparsityPattern>(read_pattern(in));
  if (pattern->size() != n || pattern->c_level() != c_level) {
    throw Error(ErrorCode::checkpoint_mismatch, "pattern block disagrees with checkpoint header");
  }
  in >> tag;
  if (tag != "data") throw Error(ErrorCode::parse_error, "expected 'data' marker");
  in.get();  // the newline after the marker
  for (int l = 0; l < L; ++l) {
    SparseLayer<double> layer;
    layer.pattern = pattern;
    layer.values.resize(pattern->nnz());
    layer.bias.resize(n);
    read_doubles(in, layer.values);
    read_doubles(in, layer.bias);
    ckpt.net.layers.push_back(std::move(layer));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  return read_checkpoint(in);
}

}  // namespace feonet

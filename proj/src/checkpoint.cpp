#include "kelm/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace kelm {

namespace {
constexpr const char* kMagic = "KELM-CKPT 1";

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}
}  // namespace

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp);
    os << contents;
    if (!os.flush()) throw Error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("cannot rename " + tmp + " to " + path);
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::string out = kMagic;
  out += "\n";
  for (const auto& [name, t] : params.entries()) {
    out += name;
    for (int d : t.shape()) {
      out += " ";
      out += std::to_string(d);
    }
    out += "\n";
    const auto& vals = t.values();
    for (size_t i = 0; i < vals.size(); ++i) {
      if (i) out += " ";
      append_double(out, vals[i]);
    }
    out += "\n";
  }
  write_file_atomic(path, out);
}

void load_checkpoint(ModelParams& params, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(is, line) || line != kMagic)
    throw Error("bad checkpoint header in " + path);

  size_t loaded = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string name;
    hs >> name;
    Shape shape;
    int d;
    while (hs >> d) shape.push_back(d);
    if (!params.has(name)) throw Error("checkpoint tensor not in model: " + name);
    Tensor t = params.get(name);
    if (t.shape() != shape) throw Error("checkpoint shape mismatch for tensor " + name);

    if (!std::getline(is, line)) throw Error("truncated checkpoint at tensor " + name);
    std::istringstream vs(line);
    auto& vals = t.values();
    for (size_t i = 0; i < vals.size(); ++i)
      if (!(vs >> vals[i])) throw Error("short value row for tensor " + name);
    double extra;
    if (vs >> extra) throw Error("excess values for tensor " + name);
    ++loaded;
  }
  if (loaded != params.count())
    throw Error("checkpoint holds " + std::to_string(loaded) + " tensors, model has " +
                std::to_string(params.count()));
}

}  // namespace kelm

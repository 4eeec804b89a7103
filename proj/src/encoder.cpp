#include "kelm/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kelm {

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = size();
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocab::id_or_unk(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write vocab " + path);
  for (const auto& t : tokens_) os << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open vocab " + path);
  Vocab v;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (first) {
      if (line != "[UNK]") throw Error(path + ": vocab must start with [UNK]");
      first = false;
      continue;
    }
    if (!line.empty()) v.add(line);
  }
  return v;
}

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "lookup") return EncoderKind::Lookup;
  if (name == "tiny_transformer") return EncoderKind::TinyTransformer;
  if (name == "precomputed") return EncoderKind::Precomputed;
  throw Error("unknown encoder kind: " + name);
}

void init_encoder_params(const EncoderConfig& config, int vocab_size, ModelParams& params,
                         Rng& rng) {
  if (config.kind == EncoderKind::Precomputed) return;
  if (config.d_t < 1) throw Error("encoder: d_t must be >= 1");
  params.add("encoder.embed", glorot_uniform({vocab_size, config.d_t}, rng));
  params.add("encoder.pos", glorot_uniform({config.max_positions, config.d_t}, rng));
  if (config.kind == EncoderKind::Lookup) return;

  if (config.d_t % config.heads != 0)
    throw Error("encoder: d_t must be divisible by the head count");
  const int d_head = config.d_t / config.heads;
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "encoder.l" + std::to_string(l) + ".";
    for (int h = 0; h < config.heads; ++h) {
      const std::string hp = p + "h" + std::to_string(h) + ".";
      params.add(hp + "wq", glorot_uniform({config.d_t, d_head}, rng));
      params.add(hp + "wk", glorot_uniform({config.d_t, d_head}, rng));
      params.add(hp + "wv", glorot_uniform({config.d_t, d_head}, rng));
    }
    params.add(p + "wo", glorot_uniform({config.d_t, config.d_t}, rng));
    params.add(p + "ln1.g", Tensor::of({config.d_t}, std::vector<double>(static_cast<size_t>(config.d_t), 1.0), true));
    params.add(p + "ln1.b", Tensor::zeros({config.d_t}, true));
    const int d_ffn = config.d_t * config.ffn_multiplier;
    params.add(p + "ffn.w1", glorot_uniform({config.d_t, d_ffn}, rng));
    params.add(p + "ffn.b1", Tensor::zeros({1, d_ffn}, true));
    params.add(p + "ffn.w2", glorot_uniform({d_ffn, config.d_t}, rng));
    params.add(p + "ffn.b2", Tensor::zeros({1, config.d_t}, true));
    params.add(p + "ln2.g", Tensor::of({config.d_t}, std::vector<double>(static_cast<size_t>(config.d_t), 1.0), true));
    params.add(p + "ln2.b", Tensor::zeros({config.d_t}, true));
  }
}

namespace {

// bias row broadcast onto n rows: ones(n,1) * b(1,d)
Tensor broadcast_rows(const Tensor& bias_row, int n) {
  Tensor ones = Tensor::of({n, 1}, std::vector<double>(static_cast<size_t>(n), 1.0));
  return matmul(ones, bias_row);
}

}  // namespace

Tensor encode_tokens(const TokenizedText& text, const EncoderConfig& config, const Vocab& vocab,
                     const ModelParams& params, EncoderTrace* trace) {
  if (config.kind == EncoderKind::Precomputed)
    throw Error("encode_tokens: precomputed encoder serves vectors via load_precomputed");
  const int n = text.size();
  if (n > config.max_positions)
    throw Error("encode_tokens: sequence of " + std::to_string(n) +
                " tokens exceeds max_positions=" + std::to_string(config.max_positions));

  std::vector<int> ids(static_cast<size_t>(n));
  std::vector<int> positions(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    ids[static_cast<size_t>(i)] = vocab.id_or_unk(text.tokens[static_cast<size_t>(i)]);
    positions[static_cast<size_t>(i)] = i;
  }
  Tensor x = add(gather(params.get("encoder.embed"), ids),
                 gather(params.get("encoder.pos"), positions));
  if (config.kind == EncoderKind::Lookup) return x;

  const int d_head = config.d_t / config.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "encoder.l" + std::to_string(l) + ".";
    std::vector<Tensor> head_ctx;
    for (int h = 0; h < config.heads; ++h) {
      const std::string hp = p + "h" + std::to_string(h) + ".";
      Tensor q = matmul(x, params.get(hp + "wq"));
      Tensor k = matmul(x, params.get(hp + "wk"));
      Tensor v = matmul(x, params.get(hp + "wv"));
      Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
      Tensor attn = softmax(scores, 1);
      if (trace) trace->attention.push_back(attn);
      head_ctx.push_back(matmul(attn, v));
    }
    Tensor mha = matmul(concat(head_ctx, 1), params.get(p + "wo"));
    x = layer_norm(add(x, mha), params.get(p + "ln1.g"), params.get(p + "ln1.b"));
    Tensor inner = add(matmul(x, params.get(p + "ffn.w1")),
                       broadcast_rows(params.get(p + "ffn.b1"), n));
    Tensor ffn = add(matmul(relu(inner), params.get(p + "ffn.w2")),
                     broadcast_rows(params.get(p + "ffn.b2"), n));
    x = layer_norm(add(x, ffn), params.get(p + "ln2.g"), params.get(p + "ln2.b"));
  }
  return x;
}

Tensor load_precomputed(const std::string& path, const std::string& example_id) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open precomputed vectors " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream header(line);
    std::string id;
    int n = 0, d = 0;
    if (!(header >> id >> n >> d) || n <= 0 || d <= 0)
      throw Error(path + ":" + std::to_string(line_no) + ": expected `example_id n d`");
    if (id != example_id) {
      for (int i = 0; i < n; ++i, ++line_no)
        if (!std::getline(is, line)) throw Error(path + ": truncated block for " + id);
      continue;
    }
    std::vector<double> values;
    values.reserve(static_cast<size_t>(n) * static_cast<size_t>(d));
    for (int i = 0; i < n; ++i) {
      ++line_no;
      if (!std::getline(is, line)) throw Error(path + ": truncated block for " + id);
      std::istringstream row(line);
      for (int j = 0; j < d; ++j) {
        double v;
        if (!(row >> v))
          throw Error(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(d) +
                      " values");
        values.push_back(v);
      }
    }
    return Tensor::of({n, d}, std::move(values));
  }
  throw Error(path + ": no block for example id " + example_id);
}

void append_precomputed(const std::string& path, const std::string& example_id, const Tensor& h) {
  if (h.rank() != 2) throw Error("append_precomputed: expected a rank-2 tensor");
  std::ofstream os(path, std::ios::app);
  if (!os) throw Error("cannot write precomputed vectors " + path);
  os << example_id << " " << h.dim(0) << " " << h.dim(1) << "\n";
  char buf[32];
  for (int i = 0; i < h.dim(0); ++i) {
    std::string row;
    for (int j = 0; j < h.dim(1); ++j) {
      std::snprintf(buf, sizeof(buf), j ? " %.17g" : "%.17g", h.at(i, j));
      row += buf;
    }
    os << row << "\n";
  }
}

}  // namespace kelm

// YAML model description -> LayerSpecs + weight files.
//
//   name: toy_cnn
//   input:
//     dims: [1, 8, 8, 3]
//     layout: NHWC
//     quantize: {zero_point: 0, scale: 64, bits: 2}
//   layers:
//     - kind: conv            # conv | fc | pool | output
//       name: conv1
//       out_channels: 16
//       kernel: 3
//       stride: 1
//       pad: 1
//       weight_bits: 1
//       weight_encoding: pm1
//       act_encoding: "01"
//       weights: conv1.bpt
//       epilogue:
//         bn: {gamma: [..], beta: [..], mean: [..], var: [..], eps: 1.0e-5}
//         relu: true
//         quantize: {zero_point: 0, scale: 4, bits: 2}
//     - kind: pool
//       pool: {kind: max, size: 2}

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "apbit/apnn.hpp"
#include "apbit/bpt_io.hpp"
#include "apbit/error.hpp"

namespace apbit {

namespace {

class Parser {
 public:
  explicit Parser(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    const int line = at.Mark().is_null() ? 0 : at.Mark().line + 1;
    throw Error(ErrorCode::ParseError, origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  void expect_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void only_keys(const YAML::Node& n, std::initializer_list<const char*> keys) const {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "'");
    }
  }

  const YAML::Node required(const YAML::Node& map, const char* key) const {
    const YAML::Node n = map[key];
    if (!n) fail(map, std::string("missing key '") + key + "'");
    return n;
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "bad value '" + n.Scalar() + "' for " + what);
    }
  }

  std::size_t count(const YAML::Node& n, const std::string& what) const {
    const auto v = scalar<long long>(n, what);
    if (v < 0) fail(n, what + " must be non-negative");
    return static_cast<std::size_t>(v);
  }

  template <class T>
  T optional(const YAML::Node& map, const char* key, T fallback) const {
    const YAML::Node n = map[key];
    return n ? scalar<T>(n, key) : fallback;
  }

  std::vector<double> doubles(const YAML::Node& n, const std::string& what) const {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    std::vector<double> out;
    for (const auto& e : n) out.push_back(scalar<double>(e, what));
    return out;
  }

  Encoding encoding(const YAML::Node& n) const {
    try {
      return parse_encoding(scalar<std::string>(n, "encoding"));
    } catch (const Error& e) {
      fail(n, e.what());
    }
  }

  Quantize quantize(const YAML::Node& n) const {
    expect_map(n, "quantize");
    only_keys(n, {"zero_point", "scale", "bits"});
    Quantize q;
    q.zero_point = optional<std::int32_t>(n, "zero_point", 0);
    q.scale = optional<double>(n, "scale", 1.0);
    q.bits = scalar<int>(required(n, "bits"), "bits");
    return q;
  }

  Pool pool(const YAML::Node& n) const {
    expect_map(n, "pool");
    only_keys(n, {"kind", "size"});
    Pool p;
    const auto kind = optional<std::string>(n, "kind", "max");
    if (kind == "max") p.kind = PoolKind::Max;
    else if (kind == "avg") p.kind = PoolKind::Avg;
    else fail(n["kind"], "pool kind must be max or avg");
    p.size = optional<int>(n, "size", 2);
    if (p.size < 1) fail(n, "pool size must be positive");
    return p;
  }

  EpilogueSpec epilogue(const YAML::Node& n) const {
    expect_map(n, "epilogue");
    only_keys(n, {"bn", "relu", "pool", "quantize"});
    EpilogueSpec e;
    if (const auto bn = n["bn"]) {
      expect_map(bn, "bn");
      only_keys(bn, {"gamma", "beta", "mean", "var", "eps"});
      BatchNorm b;
      b.gamma = doubles(required(bn, "gamma"), "gamma");
      b.beta = doubles(required(bn, "beta"), "beta");
      b.mean = doubles(required(bn, "mean"), "mean");
      b.var = doubles(required(bn, "var"), "var");
      b.eps = optional<double>(bn, "eps", 1e-5);
      e.bn = std::move(b);
    }
    e.relu = optional<bool>(n, "relu", false);
    if (const auto p = n["pool"]) e.pool = pool(p);
    if (const auto q = n["quantize"]) e.quantize = quantize(q);
    return e;
  }

  LayerSpec layer(const YAML::Node& n, std::size_t index, std::vector<std::filesystem::path>& weights) const {
    expect_map(n, "layer");
    LayerSpec l;
    try {
      l.kind = parse_layer_kind(scalar<std::string>(required(n, "kind"), "kind"));
    } catch (const Error& e) {
      fail(n["kind"], e.what());
    }
    l.name = optional<std::string>(n, "name", std::string(to_string(l.kind)) + std::to_string(index));

    if (l.kind == LayerKind::Pool) {
      only_keys(n, {"kind", "name", "pool"});
      l.pool = pool(required(n, "pool"));
      return l;
    }
    if (l.kind == LayerKind::Conv) {
      only_keys(n, {"kind", "name", "out_channels", "kernel", "stride", "pad", "weight_bits", "act_bits",
                    "weight_encoding", "act_encoding", "weights", "epilogue"});
      l.out_channels = count(required(n, "out_channels"), "out_channels");
      l.kernel = count(required(n, "kernel"), "kernel");
      l.stride = n["stride"] ? count(n["stride"], "stride") : 1;
      l.pad = n["pad"] ? count(n["pad"], "pad") : 0;
    } else {
      only_keys(n, {"kind", "name", "out_features", "weight_bits", "act_bits", "weight_encoding",
                    "act_encoding", "weights", "epilogue"});
      l.out_features = count(required(n, "out_features"), "out_features");
    }
    l.weight_bits = optional<int>(n, "weight_bits", 1);
    l.act_bits = optional<int>(n, "act_bits", 0);
    if (const auto e = n["weight_encoding"]) l.weight_encoding = encoding(e);
    if (const auto e = n["act_encoding"]) l.act_encoding = encoding(e);
    if (const auto e = n["epilogue"]) l.epilogue = epilogue(e);
    weights.emplace_back(scalar<std::string>(required(n, "weights"), "weights"));
    return l;
  }

  ModelConfig model(const YAML::Node& root) const {
    expect_map(root, "model config");
    only_keys(root, {"name", "input", "layers"});
    ModelConfig cfg;
    cfg.name = optional<std::string>(root, "name", "model");

    const YAML::Node in = required(root, "input");
    expect_map(in, "input");
    only_keys(in, {"dims", "layout", "quantize"});
    const YAML::Node dims = required(in, "dims");
    if (!dims.IsSequence()) fail(dims, "dims must be a list");
    for (const auto& d : dims) cfg.input.dims.push_back(count(d, "dim"));
    if (const auto lay = in["layout"]) {
      try {
        cfg.input.layout = parse_layout(scalar<std::string>(lay, "layout"));
      } catch (const Error& e) {
        fail(lay, e.what());
      }
    }
    if (const auto q = in["quantize"]) cfg.input.quantize = quantize(q);

    const YAML::Node layers = required(root, "layers");
    if (!layers.IsSequence() || layers.size() == 0) fail(layers, "layers must be a non-empty list");
    std::size_t i = 0;
    for (const auto& l : layers) cfg.layers.push_back(layer(l, i++, cfg.weight_files));
    return cfg;
  }

 private:
  std::string origin_;
};

}  // namespace

ModelConfig parse_model_config(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorCode::ParseError, origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  return Parser(origin).model(root);
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open model config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  ModelConfig cfg = parse_model_config(ss.str(), path.string());
  for (auto& w : cfg.weight_files) {
    if (w.is_relative()) w = path.parent_path() / w;
  }
  return cfg;
}

ModelGraph load_model(const std::filesystem::path& path) {
  ModelConfig cfg = load_model_config(path);
  std::vector<BitPlaneTensor> weights;
  weights.reserve(cfg.weight_files.size());
  for (const auto& w : cfg.weight_files) weights.push_back(load_bpt(w));
  return ModelGraph::build(std::move(cfg.input), std::move(cfg.layers), std::move(weights));
}

}  // namespace apbit

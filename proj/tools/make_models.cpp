// Regenerates the shipped example models under models/: YAML configs, packed
// weights, a sample image and golden logits from the value-domain oracle.
//
//   apbit_make_models <models-dir>

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "apbit/apnn.hpp"
#include "apbit/bpt_io.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;
using namespace apbit;

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

struct Layer {
  LayerSpec spec;
  IntTensor weights;  // values, {Cout,K,K,Cin} or {out,in}
};

struct Builder {
  std::string name;
  InputSpec input;
  std::vector<Layer> layers;
  IntTensor acts;  // current activation levels (NHWC or {N,F})
  std::mt19937_64 rng{2024};

  // BN statistics from the raw accumulators so every channel is centred.
  BatchNorm calibrate(const IntTensor& raw, std::size_t channels) {
    BatchNorm bn;
    const std::size_t rows = raw.size() / channels;
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0, s2 = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double v = raw[r * channels + c];
        s += v;
        s2 += v * v;
      }
      const double mean = s / rows, var = std::max(s2 / rows - mean * mean, 1.0);
      bn.gamma.push_back(round4(std::uniform_real_distribution<double>(0.8, 1.2)(rng)));
      bn.beta.push_back(round4(std::uniform_real_distribution<double>(-0.2, 0.2)(rng)));
      bn.mean.push_back(round4(mean));
      bn.var.push_back(round4(var));
    }
    return bn;
  }

  IntTensor values_for(const LayerSpec& l) const {
    IntTensor x = acts;
    if (l.act_encoding == Encoding::PlusMinusOne)
      for (auto& v : x.values()) v = 2 * v - 1;
    return x;
  }

  void conv(std::string lname, std::size_t cout, int p, Encoding we, Encoding xe, std::optional<Pool> pool,
            int q_out) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.name = std::move(lname);
    l.out_channels = cout;
    l.kernel = 3;
    l.pad = 1;
    l.weight_bits = p;
    l.weight_encoding = we;
    l.act_encoding = xe;
    const auto& d = acts.dims();
    const auto w = oracle::random_values({cout, 3, 3, d[3]}, p, we, rng);
    const oracle::ConvGeom g{d[0], d[3], d[1], d[2], cout, 3, 1, 1};
    const auto raw = oracle::conv(values_for(l), w, g);
    l.epilogue.bn = calibrate(raw, cout);
    l.epilogue.relu = true;
    l.epilogue.quantize = Quantize{0, q_out == 1 ? 0.5 : 0.4, q_out};
    l.epilogue.pool = pool;
    const std::vector<std::int32_t> flat(raw.values().begin(), raw.values().end());
    const auto next = oracle::epilogue(flat, d[0], g.oh(), g.ow(), cout, l.epilogue);
    const std::size_t k = pool ? static_cast<std::size_t>(pool->size) : 1;
    acts = IntTensor({d[0], g.oh() / k, g.ow() / k, cout}, next);
    layers.push_back({l, w});
  }

  void dense(LayerKind kind, std::string lname, std::size_t out, int p, Encoding we, Encoding xe, int q_out) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(lname);
    l.out_features = out;
    l.weight_bits = p;
    l.weight_encoding = we;
    l.act_encoding = xe;
    const std::size_t batch = acts.dims()[0], f = acts.size() / batch;
    const auto w = oracle::random_values({out, f}, p, we, rng);
    const auto xv = values_for(l);
    const auto raw = oracle::gemm(IntTensor({batch, f}, std::vector<std::int32_t>(xv.values().begin(), xv.values().end())), w);
    l.epilogue.bn = calibrate(raw, out);
    if (q_out > 0) {
      l.epilogue.relu = true;
      l.epilogue.quantize = Quantize{0, q_out == 1 ? 0.5 : 0.4, q_out};
    } else {
      // Logits: spread the normalized scores over a useful integer range.
      for (auto& g : l.epilogue.bn->gamma) g = round4(g * 16);
      for (auto& b : l.epilogue.bn->beta) b = round4(b * 16);
    }
    const std::vector<std::int32_t> flat(raw.values().begin(), raw.values().end());
    acts = IntTensor({batch, out}, oracle::epilogue(flat, 1, 1, batch, out, l.epilogue));
    layers.push_back({l, w});
  }

  void write(const fs::path& dir, const IntTensor& image) const {
    const fs::path wdir = dir / name;
    fs::create_directories(wdir);
    YAML::Emitter y;
    y.SetDoublePrecision(10);
    y << YAML::BeginMap << YAML::Key << "name" << YAML::Value << name;
    y << YAML::Key << "input" << YAML::Value << YAML::BeginMap;
    y << YAML::Key << "dims" << YAML::Value << YAML::Flow << input.dims;
    y << YAML::Key << "layout" << YAML::Value << std::string(to_string(input.layout));
    y << YAML::Key << "quantize" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "zero_point"
      << YAML::Value << input.quantize->zero_point << YAML::Key << "scale" << YAML::Value << input.quantize->scale
      << YAML::Key << "bits" << YAML::Value << input.quantize->bits << YAML::EndMap;
    y << YAML::EndMap;
    y << YAML::Key << "layers" << YAML::Value << YAML::BeginSeq;
    for (const auto& [l, w] : layers) {
      y << YAML::BeginMap;
      y << YAML::Key << "kind" << YAML::Value << std::string(to_string(l.kind));
      y << YAML::Key << "name" << YAML::Value << l.name;
      if (l.kind == LayerKind::Conv) {
        y << YAML::Key << "out_channels" << YAML::Value << l.out_channels;
        y << YAML::Key << "kernel" << YAML::Value << l.kernel;
        y << YAML::Key << "stride" << YAML::Value << l.stride;
        y << YAML::Key << "pad" << YAML::Value << l.pad;
      } else {
        y << YAML::Key << "out_features" << YAML::Value << l.out_features;
      }
      y << YAML::Key << "weight_bits" << YAML::Value << l.weight_bits;
      y << YAML::Key << "weight_encoding" << YAML::Value << YAML::DoubleQuoted << std::string(to_string(l.weight_encoding));
      y << YAML::Key << "act_encoding" << YAML::Value << YAML::DoubleQuoted << std::string(to_string(l.act_encoding));
      const std::string file = name + "/" + l.name + ".bpt";
      y << YAML::Key << "weights" << YAML::Value << file;
      save_bpt(dir / file, decompose(w, l.weight_bits, l.weight_encoding));

      const auto& e = l.epilogue;
      y << YAML::Key << "epilogue" << YAML::Value << YAML::BeginMap;
      if (e.bn) {
        y << YAML::Key << "bn" << YAML::Value << YAML::BeginMap;
        y << YAML::Key << "gamma" << YAML::Value << YAML::Flow << e.bn->gamma;
        y << YAML::Key << "beta" << YAML::Value << YAML::Flow << e.bn->beta;
        y << YAML::Key << "mean" << YAML::Value << YAML::Flow << e.bn->mean;
        y << YAML::Key << "var" << YAML::Value << YAML::Flow << e.bn->var;
        y << YAML::EndMap;
      }
      if (e.relu) y << YAML::Key << "relu" << YAML::Value << true;
      if (e.quantize) {
        y << YAML::Key << "quantize" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "zero_point"
          << YAML::Value << e.quantize->zero_point << YAML::Key << "scale" << YAML::Value << e.quantize->scale
          << YAML::Key << "bits" << YAML::Value << e.quantize->bits << YAML::EndMap;
      }
      y << YAML::EndMap << YAML::EndMap;
      if (e.pool) {
        y << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << "pool";
        y << YAML::Key << "name" << YAML::Value << l.name + "_pool";
        y << YAML::Key << "pool" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "kind" << YAML::Value
          << (e.pool->kind == PoolKind::Max ? "max" : "avg") << YAML::Key << "size" << YAML::Value << e.pool->size
          << YAML::EndMap << YAML::EndMap;
      }
    }
    y << YAML::EndSeq << YAML::EndMap;

    const fs::path cfg = dir / (name + ".yaml");
    {
      std::ofstream os(cfg);
      os << "# Generated by apbit_make_models; weights live in " << name << "/.\n" << y.c_str() << '\n';
    }
    save_bpt(dir / (name + "_image.bpt"), decompose(image, 8, Encoding::ZeroOne));

    // Golden logits from the reloaded config through the separate-pass oracle.
    const auto g = load_model(cfg);
    const auto logits = oracle::model(g, load_image(dir / (name + "_image.bpt")));
    if (run_model(g, image).logits != logits) throw std::runtime_error(name + ": kernels disagree with the oracle");
    std::ofstream os(dir / (name + "_golden.txt"));
    const std::size_t cols = logits.dims().back();
    for (std::size_t i = 0; i < logits.size(); ++i) os << logits[i] << ((i + 1) % cols ? ' ' : '\n');
    std::cout << "wrote " << cfg.string() << " (" << layers.size() << " compute layers, logits "
              << shape_string(logits.dims()) << ")\n";
  }
};

IntTensor image_levels(const InputSpec& in, const IntTensor& image) {
  IntTensor x = image;
  for (auto& v : x.values()) v = quantize_value(v, *in.quantize);
  return x;
}

// Smooth-ish synthetic image so neighbouring pixels correlate.
IntTensor synthetic_image(const Shape& dims, std::mt19937_64& rng) {
  IntTensor img(dims);
  std::uniform_int_distribution<int> noise(-24, 24);
  const std::size_t inner = dims.size() == 4 ? dims[3] : 1;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double t = static_cast<double>(i / inner) * 0.37 + static_cast<double>(i % inner);
    img[i] = std::clamp(static_cast<int>(128 + 90 * std::sin(t)) + noise(rng), 0, 255);
  }
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: apbit_make_models <models-dir>\n";
    return 2;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);
  try {
    {
      Builder b;
      b.name = "toy_mlp";
      b.input = InputSpec{{4, 64}, LayoutTag::NHWC, Quantize{0, 64.0, 2}};
      const auto image = synthetic_image(b.input.dims, b.rng);
      b.acts = image_levels(b.input, image);
      b.dense(LayerKind::FullyConnected, "fc1", 32, 2, Encoding::ZeroOne, Encoding::ZeroOne, 1);
      b.dense(LayerKind::FullyConnected, "fc2", 16, 1, Encoding::PlusMinusOne, Encoding::PlusMinusOne, 2);
      b.dense(LayerKind::Output, "out", 10, 1, Encoding::PlusMinusOne, Encoding::ZeroOne, 0);
      b.write(dir, image);
    }
    {
      Builder b;
      b.name = "toy_cnn";
      b.input = InputSpec{{2, 16, 16, 3}, LayoutTag::NHWC, Quantize{0, 64.0, 2}};
      const auto image = synthetic_image(b.input.dims, b.rng);
      b.acts = image_levels(b.input, image);
      b.conv("conv1", 16, 1, Encoding::PlusMinusOne, Encoding::ZeroOne, Pool{PoolKind::Max, 2}, 2);
      b.conv("conv2", 32, 2, Encoding::ZeroOne, Encoding::ZeroOne, Pool{PoolKind::Avg, 2}, 1);
      b.dense(LayerKind::FullyConnected, "fc1", 64, 1, Encoding::PlusMinusOne, Encoding::PlusMinusOne, 2);
      b.dense(LayerKind::Output, "out", 10, 2, Encoding::ZeroOne, Encoding::ZeroOne, 0);
      b.write(dir, image);
    }
  } catch (const std::exception& e) {
    std::cerr << "apbit_make_models: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

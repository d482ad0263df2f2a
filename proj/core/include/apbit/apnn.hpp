#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "apbit/apconv.hpp"
#include "apbit/apmm.hpp"
#include "apbit/bitplane.hpp"
#include "apbit/epilogue.hpp"
#include "apbit/instrument.hpp"
#include "apbit/tuner.hpp"

namespace apbit {

enum class LayerKind { Conv, FullyConnected, Pool, Output };

std::string_view to_string(LayerKind k);
LayerKind parse_layer_kind(std::string_view s);

struct LayerSpec {
  LayerKind kind = LayerKind::FullyConnected;
  std::string name;

  // Conv
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  // FullyConnected / Output
  std::size_t out_features = 0;

  int weight_bits = 1;  // p
  int act_bits = 0;     // q of this layer's input; 0 = take it from the producer
  Encoding weight_encoding = Encoding::ZeroOne;
  Encoding act_encoding = Encoding::ZeroOne;
  EpilogueSpec epilogue;

  // Pool layers only; folded into the producing conv's epilogue at build time.
  std::optional<Pool> pool;
};

// The 8-bit image entering the network.
struct InputSpec {
  Shape dims;  // {N, H, W, C} (or {N, C, H, W} with layout NCHW) or {N, F}
  LayoutTag layout = LayoutTag::NHWC;
  std::optional<Quantize> quantize;  // 8-bit -> q-bit; absent means q = 8
};

// A layer with its input/output geometry resolved.
struct ResolvedLayer {
  LayerSpec spec;
  ConvShape conv;               // Conv only
  std::size_t in_features = 0;  // FC / Output: flattened input width
  std::size_t batch = 0;
  int in_bits = 0;
  Encoding in_encoding = Encoding::ZeroOne;
  Shape out_dims;               // after pooling; NHWC for conv, {N, F} for FC
  int out_bits = 0;             // 0 for int32 logits
};

// Validated, immutable layer chain with pre-decomposed weights.
class ModelGraph {
 public:
  // Pool layers are folded into the preceding conv. weights[i] belongs to the
  // i-th Conv/FC/Output layer: {C_out, K, K, C_in} or {out, in}.
  static ModelGraph build(InputSpec input, std::vector<LayerSpec> layers, std::vector<BitPlaneTensor> weights);

  const InputSpec& input() const { return input_; }
  int input_bits() const { return input_.quantize ? input_.quantize->bits : 8; }
  const std::vector<ResolvedLayer>& layers() const { return layers_; }
  const BitPlaneTensor& weights(std::size_t layer) const { return weights_[layer]; }
  std::size_t logits() const { return layers_.back().out_dims.back(); }

 private:
  InputSpec input_;
  std::vector<ResolvedLayer> layers_;
  std::vector<BitPlaneTensor> weights_;
};

struct RunOptions {
  bool fusion = true;
  unsigned threads = 1;
  // When set, layers whose precision switch picks a native path run on the
  // reference integer kernels instead of the emulation.
  std::optional<SwitchProfile> profile;
};

struct LayerReport {
  std::string name;
  LayerKind kind = LayerKind::FullyConnected;
  int p = 0;
  int q = 0;
  TileConfig cfg;
  ComputePath path = ComputePath::Emulate;
  TrafficSnapshot traffic;
  double seconds = 0.0;
  std::size_t out_elements = 0;
  // Bits of this layer's output handed across the layer boundary: the packed
  // activation written by a fused kernel, or the wide tensor the separate
  // quantization pass reads when unfused.
  std::uint64_t output_stream_bits = 0;
};

struct RunResult {
  IntTensor logits;
  std::vector<LayerReport> layers;  // entry 0 is the input quantization stage
  TrafficSnapshot traffic;
  double seconds = 0.0;
};

// Runs the network on an 8-bit image (values 0..255, dims per InputSpec).
RunResult run_model(const ModelGraph& g, const IntTensor& image, const RunOptions& options = {});

struct FusionMeasurement {
  TrafficSnapshot fused_traffic;
  TrafficSnapshot unfused_traffic;
  double fused_time = 0.0;    // best of `repeats` runs, seconds
  double unfused_time = 0.0;
  // Median over repeats of (unfused - fused) for back-to-back runs in
  // alternating order; drift common to both runs cancels out.
  double median_saving = 0.0;
  std::vector<LayerReport> fused_layers;
  std::vector<LayerReport> unfused_layers;
  bool logits_match = false;
};

FusionMeasurement measure_fusion(const ModelGraph& g, const IntTensor& image, int repeats = 3,
                                 unsigned threads = 1);

// ---------------------------------------------------------------------------
// Model config files (YAML). Weight paths resolve against the config's
// directory. Errors carry the offending line.

struct ModelConfig {
  std::string name;
  InputSpec input;
  std::vector<LayerSpec> layers;
  std::vector<std::filesystem::path> weight_files;  // one per Conv/FC/Output layer
};

ModelConfig parse_model_config(const std::string& text, const std::string& origin = "<config>");
ModelConfig load_model_config(const std::filesystem::path& path);
ModelGraph load_model(const std::filesystem::path& path);

// Reads a .bpt image (8-bit ZeroOne planes) into values.
IntTensor load_image(const std::filesystem::path& path);

}  // namespace apbit

#include "apbit/apnn.hpp"

#include <algorithm>
#include <chrono>

#include "apbit/bpt_io.hpp"
#include "apbit/error.hpp"
#include "apbit/reference.hpp"

namespace apbit {

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Pool: return "pool";
    case LayerKind::Output: return "output";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "fc" || s == "fully_connected") return LayerKind::FullyConnected;
  if (s == "pool") return LayerKind::Pool;
  if (s == "output") return LayerKind::Output;
  throw Error(ErrorCode::UnsupportedLayer, "unknown layer kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Graph construction

namespace {

[[noreturn]] void graph_error(const LayerSpec& l, const std::string& msg) {
  throw Error(ErrorCode::GraphShapeError, "layer '" + l.name + "': " + msg);
}

}  // namespace

ModelGraph ModelGraph::build(InputSpec input, std::vector<LayerSpec> layers, std::vector<BitPlaneTensor> weights) {
  if (layers.empty()) throw Error(ErrorCode::GraphShapeError, "model has no layers");
  if (input.quantize) {
    EpilogueSpec probe;
    probe.quantize = input.quantize;
    probe.validate(1);
  }

  // Fold pooling layers into the conv that produces their input.
  std::vector<LayerSpec> compute;
  for (auto& l : layers) {
    if (l.kind != LayerKind::Pool) {
      compute.push_back(std::move(l));
      continue;
    }
    if (!l.pool) graph_error(l, "pool layer without window");
    if (compute.empty() || compute.back().kind != LayerKind::Conv) {
      throw Error(ErrorCode::UnsupportedLayer, "layer '" + l.name + "': pooling must follow a conv layer");
    }
    if (compute.back().epilogue.pool) graph_error(l, "conv '" + compute.back().name + "' already pools");
    compute.back().epilogue.pool = l.pool;
  }

  if (weights.size() != compute.size()) {
    throw Error(ErrorCode::GraphShapeError, "expected " + std::to_string(compute.size()) +
                                                " weight tensors, got " + std::to_string(weights.size()));
  }

  ModelGraph g;
  g.input_ = std::move(input);
  const Shape& in = g.input_.dims;
  if (in.size() != 2 && in.size() != 4) {
    throw Error(ErrorCode::GraphShapeError, "input must be {N,F} or rank 4, got " + shape_string(in));
  }
  if (g.input_.layout == LayoutTag::NPHWC) {
    throw Error(ErrorCode::BadLayoutTag, "input layout must be NCHW or NHWC");
  }

  // Current activation geometry, NHWC.
  Shape cur = in;
  if (in.size() == 4 && g.input_.layout == LayoutTag::NCHW) cur = {in[0], in[2], in[3], in[1]};
  int cur_bits = g.input_bits();

  for (std::size_t i = 0; i < compute.size(); ++i) {
    ResolvedLayer r;
    r.spec = std::move(compute[i]);
    const LayerSpec& l = r.spec;
    const bool last = i + 1 == compute.size();
    const BitPlaneTensor& w = weights[i];

    if (l.kind == LayerKind::Output && !last) graph_error(l, "output layer must be last");
    if (last && l.kind != LayerKind::Output) graph_error(l, "last layer must be an output layer");
    if (l.act_bits != 0 && l.act_bits != cur_bits) {
      graph_error(l, "declares " + std::to_string(l.act_bits) + "-bit inputs but receives " +
                         std::to_string(cur_bits) + "-bit activations");
    }
    if (l.act_encoding == Encoding::PlusMinusOne && cur_bits != 1) {
      graph_error(l, "+-1 activations need 1-bit inputs");
    }
    if (w.bits() != l.weight_bits || w.encoding() != l.weight_encoding) {
      graph_error(l, "weight tensor is " + std::to_string(w.bits()) + "-bit " + std::string(to_string(w.encoding())) +
                         ", layer declares " + std::to_string(l.weight_bits) + "-bit " +
                         std::string(to_string(l.weight_encoding)));
    }
    r.in_bits = cur_bits;
    r.in_encoding = l.act_encoding;
    r.batch = cur[0];

    std::size_t channels = 0;
    if (l.kind == LayerKind::Conv) {
      if (cur.size() != 4) graph_error(l, "conv needs a 4-d input, got " + shape_string(cur));
      select_padding(l.weight_encoding, l.act_encoding);
      r.conv = ConvShape{cur[0], cur[3], cur[1], cur[2], l.out_channels, l.kernel, l.stride, l.pad};
      try {
        r.conv.validate();
      } catch (const Error& e) {
        graph_error(l, e.what());
      }
      const Shape expect{l.out_channels, l.kernel, l.kernel, cur[3]};
      if (w.dims() != expect) graph_error(l, "weights " + shape_string(w.dims()) + ", expected " + shape_string(expect));
      std::size_t oh = r.conv.out_height(), ow = r.conv.out_width();
      if (l.epilogue.pool) {
        const auto k = static_cast<std::size_t>(l.epilogue.pool->size);
        if (k == 0 || oh / k == 0 || ow / k == 0) graph_error(l, "pool window exceeds the conv output");
        oh /= k;
        ow /= k;
      }
      r.out_dims = {cur[0], oh, ow, l.out_channels};
      channels = l.out_channels;
    } else {
      if (l.epilogue.pool) {
        throw Error(ErrorCode::UnsupportedLayer, "layer '" + l.name + "': pooling on a fully connected layer");
      }
      std::size_t features = 1;
      for (std::size_t d = 1; d < cur.size(); ++d) features *= cur[d];
      r.in_features = features;
      const Shape expect{l.out_features, features};
      if (l.out_features == 0) graph_error(l, "out_features must be positive");
      if (w.dims() != expect) graph_error(l, "weights " + shape_string(w.dims()) + ", expected " + shape_string(expect));
      r.out_dims = {cur[0], l.out_features};
      channels = l.out_features;
    }

    try {
      l.epilogue.validate(channels);
    } catch (const Error& e) {
      graph_error(l, e.what());
    }
    if (!last && !l.epilogue.quantize) graph_error(l, "hidden layers must quantize their output");
    if (last && l.epilogue.quantize) graph_error(l, "the output layer produces int32 logits and cannot quantize");

    r.out_bits = l.epilogue.quantize ? l.epilogue.quantize->bits : 0;
    cur = r.out_dims;
    cur_bits = r.out_bits;
    g.layers_.push_back(std::move(r));
  }
  g.weights_ = std::move(weights);
  return g;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Activations live channel-major between conv layers and as {N, F} planes
// once flattened.
using Activation = std::variant<ChannelMajorTensor, BitPlaneTensor>;

// {N, H, W, C} map -> {N, H*W*C} planes, features ordered (h, w, c).
BitPlaneTensor flatten(const ChannelMajorTensor& x) {
  const std::size_t hwc = x.height() * x.width() * x.channels();
  BitPlaneTensor out({x.batch(), hwc}, x.bits(), x.encoding());
  for (int t = 0; t < x.bits(); ++t) {
    for (std::size_t n = 0; n < x.batch(); ++n) {
      std::size_t col = 0;
      for (std::size_t y = 0; y < x.height(); ++y) {
        for (std::size_t xx = 0; xx < x.width(); ++xx) {
          const auto run = x.run(n, t, y, xx);
          for (std::size_t c = 0; c < x.channels(); ++c, ++col) {
            if ((run[c / kWordBits] >> (c % kWordBits)) & 1u) out.set_bit(t, n, col, true);
          }
        }
      }
    }
  }
  return out;
}

// Quantized levels -> packed activations in the consumer's encoding. A +-1
// consumer reads level 1 as +1 and level 0 as -1.
Activation pack_levels(const IntTensor& levels, int bits, Encoding enc, bool as_map) {
  if (as_map) return to_channel_major(levels, LayoutTag::NHWC, bits, Encoding::ZeroOne).with_encoding(enc);
  return decompose(levels, bits, Encoding::ZeroOne).with_encoding(enc);
}

Activation retag(Activation a, Encoding enc) {
  return std::visit([enc](auto& t) -> Activation { return t.with_encoding(enc); }, a);
}

IntTensor nchw_to_nhwc(const IntTensor& x) {
  const auto& d = x.dims();
  const std::size_t n = d[0], c = d[1], h = d[2], w = d[3];
  IntTensor out({n, h, w, c});
  auto src = x.values();
  auto dst = out.values();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) dst[((b * h + y) * w + xx) * c + ch] = src[((b * c + ch) * h + y) * w + xx];
  return out;
}

// The separate-pass pipeline: every stage reads and writes a full-width
// tensor. Intermediates are accounted at 32 bits per element.
IntTensor unfused_epilogue(const IntTensor& y, const EpilogueSpec& spec, std::size_t batch, std::size_t height,
                           std::size_t width, std::size_t channels, TrafficCounter& tc,
                           std::uint64_t& stream_bits) {
  const std::size_t n = y.size();
  auto src = y.values();
  if (spec.empty()) {
    stream_bits = 32ull * n;
    return y;
  }

  std::vector<double> v(src.begin(), src.end());
  if (spec.bn) {
    tc.add_read_main(32ull * n);
    const auto& bn = *spec.bn;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % channels;
      v[i] = bn_apply(src[i], bn.gamma[c], bn.beta[c], bn.mean[c], bn.var[c], bn.eps);
    }
    tc.add_written_main(32ull * n);
  }
  if (spec.relu) {
    tc.add_read_main(32ull * n);
    for (auto& e : v) e = std::max(e, 0.0);
    tc.add_written_main(32ull * n);
  }

  Shape out_dims = y.dims();
  if (spec.pool) {
    const std::size_t k = static_cast<std::size_t>(spec.pool->size);
    const std::size_t oh = height / k, ow = width / k;
    std::vector<double> pooled(batch * oh * ow * channels);
    std::vector<double> window(k * k);
    tc.add_read_main(32ull * n);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* img = v.data() + b * height * width * channels;
      for (std::size_t py = 0; py < oh; ++py) {
        for (std::size_t px = 0; px < ow; ++px) {
          for (std::size_t c = 0; c < channels; ++c) {
            std::size_t m = 0;
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx)
                window[m++] = img[((py * k + dy) * width + (px * k + dx)) * channels + c];
            pooled[((b * oh + py) * ow + px) * channels + c] = pool_reduce(window, spec.pool->kind);
          }
        }
      }
    }
    tc.add_written_main(32ull * pooled.size());
    v = std::move(pooled);
    out_dims = {batch, oh, ow, channels};
  }

  // Final pass: quantize to packed levels, or floor to int32 logits.
  const std::size_t m = v.size();
  IntTensor out(out_dims);
  auto dst = out.values();
  tc.add_read_main(32ull * m);
  stream_bits = 32ull * m;
  for (std::size_t i = 0; i < m; ++i) dst[i] = finalize_value(spec, v[i]);
  tc.add_written_main((spec.quantize ? static_cast<std::uint64_t>(spec.quantize->bits) : 32ull) * m);
  return out;
}

// Value-domain view of an activation for the native integer kernels.
IntTensor activation_values(const Activation& a) {
  if (const auto* m = std::get_if<ChannelMajorTensor>(&a)) return from_channel_major(*m);
  return reconstruct(std::get<BitPlaneTensor>(a));
}

// Native conv: value im2col + the reference GEMM. Out-of-frame taps are 0.
IntTensor native_conv(const IntTensor& x_nhwc, const IntTensor& w_okkc, const ConvShape& s) {
  const std::size_t taps = s.kernel * s.kernel, kdim = taps * s.in_channels;
  const std::size_t oh = s.out_height(), ow = s.out_width(), npix = s.out_pixels();
  IntTensor wcol({s.out_channels, kdim}, std::vector<std::int32_t>(w_okkc.values().begin(), w_okkc.values().end()));
  IntTensor xcol({npix, kdim});
  auto xv = x_nhwc.values();
  auto dst = xcol.values();
  for (std::size_t pix = 0; pix < npix; ++pix) {
    const std::size_t n = pix / (oh * ow), oy = (pix / ow) % oh, ox = pix % ow;
    for (std::size_t kh = 0; kh < s.kernel; ++kh) {
      for (std::size_t kw = 0; kw < s.kernel; ++kw) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + kh) - static_cast<std::ptrdiff_t>(s.pad);
        const auto ix = static_cast<std::ptrdiff_t>(ox * s.stride + kw) - static_cast<std::ptrdiff_t>(s.pad);
        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(s.height) || ix >= static_cast<std::ptrdiff_t>(s.width)) continue;
        const std::int32_t* src = xv.data() + ((n * s.height + iy) * s.width + ix) * s.in_channels;
        std::copy_n(src, s.in_channels, dst.data() + pix * kdim + (kh * s.kernel + kw) * s.in_channels);
      }
    }
  }
  const IntTensor y = reference_gemm(wcol, xcol);  // C_out x pixels
  IntTensor out({s.batch, oh, ow, s.out_channels});
  auto o = out.values();
  for (std::size_t pix = 0; pix < npix; ++pix)
    for (std::size_t c = 0; c < s.out_channels; ++c) o[pix * s.out_channels + c] = y.values()[c * npix + pix];
  return out;
}

Activation input_stage(const ModelGraph& g, const IntTensor& image, TrafficCounter& tc, LayerReport& rep) {
  const InputSpec& in = g.input();
  if (image.dims() != in.dims) {
    throw Error(ErrorCode::ShapeMismatch, "image " + shape_string(image.dims()) + " does not match model input " +
                                              shape_string(in.dims));
  }
  for (auto v : image.values()) {
    if (v < 0 || v > 255) throw Error(ErrorCode::ValueOutOfRange, "image value " + std::to_string(v) + " is not 8-bit");
  }
  const std::size_t n = image.size();
  const int bits = g.input_bits();
  tc.add_read_main(8ull * n);

  IntTensor levels = in.dims.size() == 4 && in.layout == LayoutTag::NCHW ? nchw_to_nhwc(image) : image;
  if (in.quantize) {
    for (auto& v : levels.values()) v = quantize_value(static_cast<double>(v), *in.quantize);
  }
  const ResolvedLayer& first = g.layers().front();
  Activation act;
  if (first.spec.kind == LayerKind::Conv) {
    act = pack_levels(levels, bits, first.in_encoding, true);
  } else {
    IntTensor flat({levels.dims()[0], first.in_features}, std::vector<std::int32_t>(levels.values().begin(), levels.values().end()));
    act = pack_levels(flat, bits, first.in_encoding, false);
  }
  tc.add_written_main(static_cast<std::uint64_t>(bits) * n);

  rep.name = "input";
  rep.q = bits;
  rep.out_elements = n;
  rep.output_stream_bits = static_cast<std::uint64_t>(bits) * n;
  return act;
}

}  // namespace

RunResult run_model(const ModelGraph& g, const IntTensor& image, const RunOptions& options) {
  RunResult result;
  const auto t_all = Clock::now();

  LayerReport in_rep;
  TrafficCounter in_tc;
  auto t0 = Clock::now();
  Activation act = input_stage(g, image, in_tc, in_rep);
  in_rep.seconds = seconds_since(t0);
  in_rep.traffic = in_tc.snapshot();
  result.layers.push_back(in_rep);

  const auto& layers = g.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const ResolvedLayer& L = layers[i];
    const LayerSpec& spec = L.spec;
    const bool last = i + 1 == layers.size();
    const Encoding next_enc = last ? Encoding::ZeroOne : layers[i + 1].in_encoding;
    const bool next_is_map = !last && layers[i + 1].spec.kind == LayerKind::Conv;

    LayerReport rep;
    rep.name = spec.name;
    rep.kind = spec.kind;
    rep.p = spec.weight_bits;
    rep.q = L.in_bits;
    rep.out_elements = element_count(L.out_dims);
    TrafficCounter tc;
    const ExecContext ctx{&tc, nullptr, options.threads};
    t0 = Clock::now();

    // GEMM view: rows x cols x k with p-bit rows and q-bit columns.
    std::size_t gm, gn, gk;
    int gp, gq;
    if (spec.kind == LayerKind::Conv) {
      gm = spec.out_channels, gn = L.conv.out_pixels(), gk = spec.kernel * spec.kernel * L.conv.in_channels;
      gp = spec.weight_bits, gq = L.in_bits;
    } else {
      gm = L.batch, gn = spec.out_features, gk = L.in_features;
      gp = L.in_bits, gq = spec.weight_bits;
    }
    const SwitchProfile prof = options.profile.value_or(SwitchProfile{});
    rep.cfg = autotune(gm, gn, gk, gp, gq, prof);
    if (options.profile) rep.path = choose_path(gp, gq, estimate(gm, gn, gk, gp, gq, rep.cfg).tlp, prof);

    const BitPlaneTensor& w = g.weights(i);
    const std::size_t oh = spec.kind == LayerKind::Conv ? L.conv.out_height() : 1;
    const std::size_t ow = spec.kind == LayerKind::Conv ? L.conv.out_width() : L.batch;
    const std::size_t ob = spec.kind == LayerKind::Conv ? L.batch : 1;
    const std::size_t ch = spec.kind == LayerKind::Conv ? spec.out_channels : spec.out_features;

    IntTensor levels;  // quantized levels, or logits for the last layer
    bool have_levels = false;
    std::optional<Activation> produced;

    if (rep.path == ComputePath::Emulate && options.fusion) {
      if (spec.kind == LayerKind::Conv) {
        auto r = apconv(w, std::get<ChannelMajorTensor>(act), L.conv, rep.cfg, spec.epilogue, ctx);
        produced = std::get<ChannelMajorTensor>(std::move(r));
      } else {
        BitPlaneTensor x = std::holds_alternative<BitPlaneTensor>(act) ? std::get<BitPlaneTensor>(act)
                                                                      : flatten(std::get<ChannelMajorTensor>(act));
        auto r = apmm(x, w, rep.cfg, spec.epilogue, ctx);
        if (auto* planes = std::get_if<BitPlaneTensor>(&r)) {
          produced = std::move(*planes);
        } else {
          levels = std::get<IntTensor>(std::move(r));
          have_levels = true;
        }
      }
      rep.output_stream_bits = (L.out_bits ? static_cast<std::uint64_t>(L.out_bits) : 32ull) * rep.out_elements;
    } else {
      IntTensor y;
      if (rep.path == ComputePath::Emulate) {
        if (spec.kind == LayerKind::Conv) {
          y = apconv(w, std::get<ChannelMajorTensor>(act), L.conv, rep.cfg, ctx);
        } else {
          BitPlaneTensor x = std::holds_alternative<BitPlaneTensor>(act) ? std::get<BitPlaneTensor>(act)
                                                                        : flatten(std::get<ChannelMajorTensor>(act));
          y = apmm(x, w, rep.cfg, ctx);
        }
      } else {
        const IntTensor xv = activation_values(act);
        const IntTensor wv = reconstruct(w);
        if (spec.kind == LayerKind::Conv) {
          y = native_conv(xv, wv, L.conv);
        } else {
          IntTensor flat({L.batch, L.in_features}, std::vector<std::int32_t>(xv.values().begin(), xv.values().end()));
          y = reference_gemm(flat, wv);
        }
        if (!options.fusion) tc.add_written_main(32ull * y.size());
      }

      if (options.fusion) {
        // Native kernel with the epilogue applied before anything is stored.
        std::vector<std::int32_t> out;
        for (std::size_t b = 0; b < ob; ++b) {
          const std::size_t per = oh * ow * ch;
          auto tile = fused_epilogue_tile(y.values().subspan(b * per, per), oh, ow, ch, spec.epilogue);
          out.insert(out.end(), tile.begin(), tile.end());
        }
        levels = IntTensor(L.out_dims, std::move(out));
        const std::uint64_t width = L.out_bits ? static_cast<std::uint64_t>(L.out_bits) : 32ull;
        tc.add_written_main(width * levels.size());
        rep.output_stream_bits = width * levels.size();
      } else {
        levels = unfused_epilogue(y, spec.epilogue, ob, oh, ow, ch, tc, rep.output_stream_bits);
        if (spec.kind != LayerKind::Conv) levels = IntTensor(L.out_dims, std::vector<std::int32_t>(levels.values().begin(), levels.values().end()));
      }
      have_levels = true;
    }

    if (last) {
      result.logits = std::move(levels);
    } else {
      Activation next;
      if (produced) {
        next = retag(std::move(*produced), next_enc);
      } else {
        (void)have_levels;
        next = pack_levels(levels, L.out_bits, next_enc, spec.kind == LayerKind::Conv);
      }
      // A conv map feeding a fully connected layer is flattened on use.
      if (!next_is_map && std::holds_alternative<ChannelMajorTensor>(next)) {
        next = flatten(std::get<ChannelMajorTensor>(next));
      }
      act = std::move(next);
    }

    rep.seconds = seconds_since(t0);
    rep.traffic = tc.snapshot();
    result.layers.push_back(std::move(rep));
  }

  for (const auto& r : result.layers) {
    result.traffic.read_main_bits += r.traffic.read_main_bits;
    result.traffic.written_main_bits += r.traffic.written_main_bits;
    result.traffic.staged_bits += r.traffic.staged_bits;
  }
  result.seconds = seconds_since(t_all);
  return result;
}

FusionMeasurement measure_fusion(const ModelGraph& g, const IntTensor& image, int repeats, unsigned threads) {
  FusionMeasurement m;
  m.fused_time = m.unfused_time = 1e300;
  RunResult fused, unfused;
  std::vector<double> savings;
  for (int i = 0; i < std::max(repeats, 1); ++i) {
    if (i % 2 == 0) {
      unfused = run_model(g, image, RunOptions{false, threads, std::nullopt});
      fused = run_model(g, image, RunOptions{true, threads, std::nullopt});
    } else {
      fused = run_model(g, image, RunOptions{true, threads, std::nullopt});
      unfused = run_model(g, image, RunOptions{false, threads, std::nullopt});
    }
    m.unfused_time = std::min(m.unfused_time, unfused.seconds);
    m.fused_time = std::min(m.fused_time, fused.seconds);
    savings.push_back(unfused.seconds - fused.seconds);
  }
  const auto mid = savings.begin() + static_cast<std::ptrdiff_t>(savings.size() / 2);
  std::nth_element(savings.begin(), mid, savings.end());
  m.median_saving = *mid;
  m.fused_traffic = fused.traffic;
  m.unfused_traffic = unfused.traffic;
  m.fused_layers = fused.layers;
  m.unfused_layers = unfused.layers;
  m.logits_match = fused.logits == unfused.logits;
  return m;
}

IntTensor load_image(const std::filesystem::path& path) {
  const BitPlaneTensor t = load_bpt(path);
  if (t.encoding() != Encoding::ZeroOne) {
    throw Error(ErrorCode::BadEncoding, "image " + path.string() + " must use 0/1 encoding");
  }
  return reconstruct(t);
}

}  // namespace apbit

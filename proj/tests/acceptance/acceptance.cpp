// Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails.
//
//   apbit_acceptance <tuner_table.csv> <models-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "apbit/apmm.hpp"
#include "apbit/apnn.hpp"
#include "apbit/error.hpp"
#include "apbit/reference.hpp"
#include "apbit/tuner.hpp"
#include "commands.hpp"
#include "oracle.hpp"
#include "random_graph.hpp"

namespace fs = std::filesystem;
using namespace apbit;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double best_seconds(int runs, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// 1. The default verify grid is bit-exact.
Verdict oracle_equivalence() {
  cli::VerifyOptions o;
  std::ostringstream log;
  const auto t0 = Clock::now();
  const auto r = cli::run_verify(o, log);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::size_t mm = 0, cv = 0, gr = 0;
  for (const auto& row : r.report.rows) {
    mm += row.kernel == "apmm";
    cv += row.kernel == "apconv";
    gr += row.kernel == "graph";
  }
  if (r.first_failure) return {false, "mismatch in " + *r.first_failure};
  return {mm > 0 && cv > 0, std::to_string(mm) + " apmm + " + std::to_string(cv) + " apconv + " +
                                std::to_string(gr) + " graph cases bit-exact in " + fmt(secs, 1) + " s"};
}

// 2. bmma tile count of wPaQ == p*q times w1a1.
Verdict cost_law() {
  std::mt19937_64 rng(2);
  const std::size_t shapes[][3] = {{64, 1024, 1024}, {128, 128, 512}, {8, 64, 384}};
  std::size_t checked = 0;
  for (const auto& s : shapes) {
    auto tiles = [&](int p, int q) {
      const auto w = decompose(oracle::random_values({s[0], s[2]}, p, Encoding::ZeroOne, rng), p, Encoding::ZeroOne);
      const auto x = decompose(oracle::random_values({s[1], s[2]}, q, Encoding::ZeroOne, rng), q, Encoding::ZeroOne);
      OpCounter ops;
      (void)apmm(w, x, autotune(s[0], s[1], s[2], p, q), ExecContext{nullptr, &ops, 1});
      return ops.snapshot().bmma_tiles;
    };
    const auto base = tiles(1, 1);
    for (int p = 1; p <= 8; ++p) {
      for (int q = 1; q <= 8; ++q) {
        const auto t = tiles(p, q);
        if (t != static_cast<std::uint64_t>(p * q) * base) {
          return {false, "w" + std::to_string(p) + "a" + std::to_string(q) + " at " + std::to_string(s[0]) + "," +
                             std::to_string(s[1]) + "," + std::to_string(s[2]) + ": " + std::to_string(t) +
                             " tiles vs " + std::to_string(p * q) + " x " + std::to_string(base)};
        }
        ++checked;
      }
    }
  }
  return {true, std::to_string(checked) + " (p,q,shape) cases, tiles == p*q * w1a1 exactly"};
}

// 3. decompose + combine ops <= 5% of MACs at 1024 for w1a2, decreasing with size.
Verdict overhead() {
  std::mt19937_64 rng(3);
  std::vector<double> ratios;
  std::string trace;
  for (std::size_t n : {128, 256, 512, 1024}) {
    OpCounter ops;
    const auto w = decompose(oracle::random_values({n, n}, 1, Encoding::ZeroOne, rng), 1, Encoding::ZeroOne, &ops);
    const auto x = decompose(oracle::random_values({n, n}, 2, Encoding::ZeroOne, rng), 2, Encoding::ZeroOne, &ops);
    (void)apmm(w, x, autotune(n, n, n, 1, 2), ExecContext{nullptr, &ops, 1});
    const auto s = ops.snapshot();
    const double r = static_cast<double>(s.decompose_ops + s.combine_ops) / static_cast<double>(s.mac_ops());
    ratios.push_back(r);
    trace += (trace.empty() ? "" : ", ") + std::to_string(n) + ":" + fmt(100 * r, 3) + "%";
  }
  bool down = true;
  for (std::size_t i = 1; i < ratios.size(); ++i) down = down && ratios[i] < ratios[i - 1];
  return {ratios.back() <= 0.05 && down, "w1a2 overhead " + trace};
}

// 4. 16x interlayer stream, fused < unfused traffic on shipped models, fused
// not slower than unfused in paired runs.
Verdict fusion_traffic(const fs::path& models) {
  std::mt19937_64 rng(4);
  InputSpec in{{1, 16, 16, 128}, LayoutTag::NHWC, Quantize{0, 64.0, 2}};
  LayerSpec c;
  c.kind = LayerKind::Conv;
  c.name = "conv";
  c.out_channels = 32;
  c.kernel = 3;
  c.pad = 1;
  c.epilogue.relu = true;
  c.epilogue.quantize = Quantize{0, 40.0, 2};
  LayerSpec pool;
  pool.kind = LayerKind::Pool;
  pool.name = "pool";
  pool.pool = Pool{PoolKind::Max, 2};
  LayerSpec out;
  out.kind = LayerKind::Output;
  out.name = "out";
  out.out_features = 10;
  const auto g = ModelGraph::build(
      in, {c, pool, out},
      {decompose(oracle::random_values({32, 3, 3, 128}, 1, Encoding::ZeroOne, rng), 1, Encoding::ZeroOne),
       decompose(oracle::random_values({10, 8 * 8 * 32}, 1, Encoding::ZeroOne, rng), 1, Encoding::ZeroOne)});
  IntTensor img(in.dims);
  for (auto& v : img.values()) v = static_cast<std::int32_t>(rng() % 256);
  const auto f = measure_fusion(g, img, 1);
  const auto fs_bits = f.fused_layers[1].output_stream_bits, us_bits = f.unfused_layers[1].output_stream_bits;
  const bool ratio16 = fs_bits > 0 && us_bits == 16 * fs_bits && fs_bits == 2 * f.fused_layers[1].out_elements;
  std::string detail = "conv+pool+q2 stream " + std::to_string(us_bits) + "/" + std::to_string(fs_bits) + " bits = " +
                       fmt(static_cast<double>(us_bits) / static_cast<double>(std::max<std::uint64_t>(fs_bits, 1)), 1) + "x";
  bool ok = ratio16 && f.logits_match;

  std::vector<fs::path> cfgs;
  for (const auto& e : fs::directory_iterator(models))
    if (e.path().extension() == ".yaml") cfgs.push_back(e.path());
  std::sort(cfgs.begin(), cfgs.end());
  if (cfgs.empty()) return {false, "no shipped models in " + models.string()};
  for (const auto& cfg : cfgs) {
    const auto mg = load_model(cfg);
    const auto image = load_image(models / (cfg.stem().string() + "_image.bpt"));
    const auto m = measure_fusion(mg, image, 200);
    const bool traffic = m.fused_traffic.total_bits() < m.unfused_traffic.total_bits();
    const bool time = m.median_saving >= 0.0;
    ok = ok && traffic && time && m.logits_match;
    detail += "; " + cfg.stem().string() + " traffic x" +
              fmt(m.unfused_traffic.total_bytes() / m.fused_traffic.total_bytes()) + ", time " +
              fmt(m.fused_time * 1e3, 3) + " vs " + fmt(m.unfused_time * 1e3, 3) + " ms (median paired saving " +
              fmt(m.median_saving * 1e6, 1) + " us)";
  }
  return {ok, detail};
}

// 5. w1a1 apmm at 1024^3 >= 4x the scalar reference, single thread.
Verdict throughput() {
  std::mt19937_64 rng(5);
  const std::size_t n = 1024;
  const auto wv = oracle::random_values({n, n}, 1, Encoding::ZeroOne, rng);
  const auto xv = oracle::random_values({n, n}, 1, Encoding::ZeroOne, rng);
  const auto w = decompose(wv, 1, Encoding::ZeroOne), x = decompose(xv, 1, Encoding::ZeroOne);
  const auto cfg = autotune(n, n, n, 1, 1);
  IntTensor y, r;
  const double t_emul = best_seconds(5, [&] { y = apmm(w, x, cfg); });
  const double t_ref = best_seconds(1, [&] { r = reference_gemm(wv, xv); });
  const double speedup = t_ref / t_emul;
  return {speedup >= 4.0 && y == r, "apmm " + fmt(t_emul * 1e3) + " ms vs reference " + fmt(t_ref * 1e3) +
                                        " ms = " + fmt(speedup, 1) + "x"};
}

Rational parse_rational(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return Rational(std::stoull(s), 1);
  return Rational(std::stoull(s.substr(0, slash)), std::stoull(s.substr(slash + 1)));
}

// 6. estimate/autotune against the independent table; switch decisions.
Verdict tuner(const fs::path& table) {
  std::ifstream is(table);
  if (!is) return {false, "cannot read " + table.string()};
  std::string line;
  std::getline(is, line);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 11) return {false, "malformed row: " + line};
    const std::size_t m = std::stoull(f[0]), n = std::stoull(f[1]), k = std::stoull(f[2]);
    const int p = std::stoi(f[3]), q = std::stoi(f[4]);
    const TileConfig probe{std::stoi(f[5]), std::stoi(f[6]), 128};
    const auto e = estimate(m, n, k, p, q, probe);
    if (e.tlp != parse_rational(f[7]) || e.ci != parse_rational(f[8])) {
      return {false, "estimate differs on row " + line + ": " + e.tlp.to_string() + ", " + e.ci.to_string()};
    }
    const TileConfig want{std::stoi(f[9]), std::stoi(f[10]), 128};
    if (autotune(m, n, k, p, q) != want) {
      return {false, "autotune differs on row " + line + ": " + autotune(m, n, k, p, q).to_string()};
    }
    ++rows;
  }
  const SwitchProfile baseline{2.5, 6.0, 64.0, "", ""};
  const auto w1a2 = choose_path(1, 2, estimate(64, 1024, 1024, 1, 2, autotune(64, 1024, 1024, 1, 2)).tlp, baseline);
  const auto w2a8 = choose_path(2, 8, estimate(64, 1024, 1024, 2, 8, TileConfig{16, 16, 128}).tlp, baseline);
  const bool ok = rows == 40 && w1a2 == ComputePath::Emulate && w2a8 == ComputePath::NativeInt8;
  return {ok, std::to_string(rows) + " table rows exact; w1a2 -> " + std::string(to_string(w1a2)) + ", w2a8 -> " +
                  std::string(to_string(w2a8))};
}

// 7. 200 random graphs: fused == unfused.
Verdict fusion_equivalence() {
  std::mt19937_64 rng(7);
  int layers = 0;
  for (int i = 0; i < 200; ++i) {
    const auto m = testgen::random_model(rng);
    layers += static_cast<int>(m.graph.layers().size());
    const auto fused = run_model(m.graph, m.image, RunOptions{true, 1, std::nullopt});
    const auto unfused = run_model(m.graph, m.image, RunOptions{false, 1, std::nullopt});
    if (fused.logits != unfused.logits) return {false, "graph " + std::to_string(i) + " differs"};
    if (fused.logits != oracle::model(m.graph, m.image)) return {false, "graph " + std::to_string(i) + " != oracle"};
  }
  return {true, "200 graphs (" + std::to_string(layers) + " layers) fused == unfused == oracle"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: apbit_acceptance <tuner_table.csv> <models-dir>\n";
    return 2;
  }
  const fs::path table = argv[1], models = argv[2];
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"1 oracle equivalence", oracle_equivalence},
      {"2 emulation cost law", cost_law},
      {"3 decompose/combine overhead", overhead},
      {"4 fusion traffic", [&] { return fusion_traffic(models); }},
      {"5 throughput floor", throughput},
      {"6 tuner fidelity", [&] { return tuner(table); }},
      {"7 fusion equivalence", fusion_equivalence},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}

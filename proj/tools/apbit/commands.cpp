#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "apbit/apmm.hpp"
#include "apbit/apnn.hpp"
#include "apbit/error.hpp"
#include "apbit/reference.hpp"
#include "apbit/tuner.hpp"
#include "oracle.hpp"
#include "random_graph.hpp"

namespace apbit::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Timing {
  double mean = 0.0;
  double stddev = 0.0;
};

template <typename F>
Timing time_runs(int warmup, int runs, F&& f) {
  for (int i = 0; i < warmup; ++i) f();
  std::vector<double> t;
  for (int i = 0; i < std::max(runs, 1); ++i) {
    const auto t0 = Clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  double mean = 0.0;
  for (double v : t) mean += v;
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  return {mean, t.size() > 1 ? std::sqrt(var / static_cast<double>(t.size() - 1)) : 0.0};
}

std::vector<std::size_t> parse_list(std::string_view s, std::size_t expect, const char* what) {
  std::vector<std::size_t> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty() || cur.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorCode::ParseError, std::string(what) + " expects " + std::to_string(expect) +
                                             " comma-separated non-negative integers, got '" + std::string(s) + "'");
    }
    out.push_back(std::stoull(cur));
    cur.clear();
  };
  for (char c : s) {
    if (c == ',') {
      flush();
    } else if (c != ' ') {
      cur += c;
    }
  }
  flush();
  if (out.size() != expect) {
    throw Error(ErrorCode::ParseError, std::string(what) + " expects " + std::to_string(expect) + " values, got '" +
                                           std::string(s) + "'");
  }
  return out;
}

std::string mnk_name(const Mnk& s) {
  return std::to_string(s.m) + "," + std::to_string(s.n) + "," + std::to_string(s.k);
}

std::uint64_t checksum_of(const IntTensor& t) { return checksum(t.values().data(), t.size()); }

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

Case parse_case(std::string_view s) {
  Case c;
  char tail = 0;
  const std::string str(s);
  if (std::sscanf(str.c_str(), "w%da%d%c", &c.p, &c.q, &tail) != 2 || c.p < 1 || c.p > kMaxBits || c.q < 1 ||
      c.q > kMaxBits) {
    throw Error(ErrorCode::ParseError, "case must look like wPaQ with P,Q in 1..8, got '" + str + "'");
  }
  return c;
}

std::string case_name(const Case& c) { return "w" + std::to_string(c.p) + "a" + std::to_string(c.q); }

Mnk parse_mnk(std::string_view s) {
  const auto v = parse_list(s, 3, "--mnk");
  if (v[0] == 0 || v[1] == 0 || v[2] == 0) throw Error(ErrorCode::ParseError, "--mnk sizes must be positive");
  return {v[0], v[1], v[2]};
}

ConvShape parse_conv(std::string_view s) {
  const auto v = parse_list(s, 8, "--conv");
  const ConvShape c{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, std::string("--conv: ") + e.what());
  }
  return c;
}

std::string conv_name(const ConvShape& s) {
  std::ostringstream os;
  os << s.batch << ',' << s.in_channels << ',' << s.height << ',' << s.width << ',' << s.out_channels << ','
     << s.kernel << ',' << s.stride << ',' << s.pad;
  return os.str();
}

EncodingFilter parse_encoding_filter(std::string_view s) {
  if (s == "all") return EncodingFilter::All;
  if (s == "01") return EncodingFilter::ZeroOne;
  if (s == "pm1") return EncodingFilter::PlusMinusOne;
  if (s == "mixed") return EncodingFilter::Mixed;
  throw Error(ErrorCode::ParseError, "--encoding must be one of all, 01, pm1, mixed; got '" + std::string(s) + "'");
}

std::string EncodingPair::name() const {
  return "w" + std::string(to_string(w)) + "/x" + std::string(to_string(x));
}

std::vector<EncodingPair> matmul_pairs(int p, int q, EncodingFilter f) {
  using enum Encoding;
  std::vector<EncodingPair> out;
  auto want = [&](EncodingFilter k) { return f == EncodingFilter::All || f == k; };
  if (want(EncodingFilter::ZeroOne)) out.push_back({ZeroOne, ZeroOne});
  if (want(EncodingFilter::PlusMinusOne) && p == 1 && q == 1) out.push_back({PlusMinusOne, PlusMinusOne});
  if (want(EncodingFilter::Mixed)) {
    if (p == 1) out.push_back({PlusMinusOne, ZeroOne});
    if (q == 1) out.push_back({ZeroOne, PlusMinusOne});
  }
  return out;
}

std::vector<EncodingPair> conv_pairs(int p, int q, EncodingFilter f) {
  auto all = matmul_pairs(p, q, f);
  std::erase_if(all, [](const EncodingPair& e) { return e.w == Encoding::ZeroOne && e.x == Encoding::PlusMinusOne; });
  return all;
}

std::vector<Case> default_matmul_cases() {
  std::vector<Case> out;
  for (int p = 1; p <= kMaxBits; ++p)
    for (int q = 1; q <= kMaxBits; ++q) out.push_back({p, q});
  return out;
}

std::vector<Mnk> default_matmul_shapes() {
  std::vector<Mnk> out;
  for (std::size_t m : {8, 64, 128})
    for (std::size_t n : {8, 64, 128})
      for (std::size_t k : {128, 512}) out.push_back({m, n, k});
  return out;
}

std::vector<Case> default_conv_cases() {
  std::vector<Case> out;
  for (int p = 1; p <= 4; ++p)
    for (int q = 1; q <= 4; ++q) out.push_back({p, q});
  out.push_back({1, 8});
  out.push_back({2, 8});
  return out;
}

// ---------------------------------------------------------------------------
// verify

VerifyOutcome run_verify(const VerifyOptions& o, std::ostream& log) {
  VerifyOutcome out;
  out.report.command = "verify";
  out.report.seed = o.seed;
  out.report.threads = o.threads;
  std::mt19937_64 rng(o.seed);
  const auto grid = legal_tile_grid();
  const bool custom_shapes = !o.mnk.empty() || !o.convs.empty();
  const bool do_matmul = !custom_shapes || !o.mnk.empty();
  const bool do_conv = !custom_shapes || !o.convs.empty();
  bool corrupt_pending = o.corrupt_bit;

  auto record = [&](ReportRow row) {
    if (o.verbose) {
      log << (row.match ? "ok   " : "FAIL ") << row.kernel << ' ' << case_name({row.p, row.q}) << ' ' << row.encoding
          << ' ' << row.shape << ' ' << row.cfg << '\n';
    }
    if (!row.match && !out.first_failure) {
      out.first_failure = row.kernel + " " + (row.p ? case_name({row.p, row.q}) + " " : "") + row.encoding + " " +
                          row.shape + (row.cfg.empty() ? "" : " cfg " + row.cfg);
    }
    out.report.rows.push_back(std::move(row));
    return !out.report.rows.back().match;
  };

  if (do_matmul) {
    const auto cases = o.cases.empty() ? default_matmul_cases() : o.cases;
    const auto shapes = o.mnk.empty() ? default_matmul_shapes() : o.mnk;
    const auto t0 = Clock::now();
    std::size_t rows = 0;
    for (const auto& c : cases) {
      for (const auto& enc : matmul_pairs(c.p, c.q, o.encoding)) {
        for (const auto& s : shapes) {
          const auto wv = oracle::random_values({s.m, s.k}, c.p, enc.w, rng);
          const auto xv = oracle::random_values({s.n, s.k}, c.q, enc.x, rng);
          const TileConfig cfg = grid[rows++ % grid.size()];
          TrafficCounter tc;
          const ExecContext ctx{&tc, nullptr, o.threads};
          const auto w = decompose(wv, c.p, enc.w), x = decompose(xv, c.q, enc.x);
          const auto t1 = Clock::now();
          IntTensor y = apmm(w, x, cfg, ctx);
          const double secs = seconds_since(t1);
          if (corrupt_pending) {
            y[0] ^= 1;
            corrupt_pending = false;
          }
          ReportRow row{"apmm", mnk_name(s), c.p, c.q, enc.name(), cfg.to_string(), checksum_of(y),
                        y == oracle::gemm(wv, xv), tc.snapshot().staged_bits / 8, 0, secs, 0.0, 1, ""};
          if (record(std::move(row))) return out;
        }
      }
    }
    log << "apmm:   " << rows << " cases matched the integer oracle (" << fixed(seconds_since(t0), 1) << " s)\n";
  }

  if (do_conv) {
    const auto cases = o.cases.empty() ? default_conv_cases() : o.cases;
    const auto t0 = Clock::now();
    std::size_t rows = 0;
    const std::size_t hw[] = {4, 8, 16};
    for (const auto& c : cases) {
      for (const auto& enc : conv_pairs(c.p, c.q, o.encoding)) {
        std::vector<ConvShape> shapes = o.convs;
        if (shapes.empty()) {
          for (int i = 0; i < o.conv_samples; ++i) {
            ConvShape s;
            s.batch = 1 + rng() % 2;
            s.height = hw[rng() % 3];
            s.width = hw[rng() % 3];
            s.kernel = rng() % 2 ? 3 : 1;
            s.stride = 1 + rng() % 2;
            s.pad = rng() % 2;
            s.in_channels = rng() % 2 ? 256 : 128;
            s.out_channels = rng() % 2 ? 8 : 4;
            shapes.push_back(s);
          }
        }
        for (const auto& s : shapes) {
          const auto xv = oracle::random_values({s.batch, s.height, s.width, s.in_channels}, c.q, enc.x, rng);
          const auto wv = oracle::random_values({s.out_channels, s.kernel, s.kernel, s.in_channels}, c.p, enc.w, rng);
          const TileConfig cfg = grid[rows++ % grid.size()];
          TrafficCounter tc;
          const ExecContext ctx{&tc, nullptr, o.threads};
          const auto x = to_channel_major(xv, LayoutTag::NHWC, c.q, enc.x);
          const auto w = decompose(wv, c.p, enc.w);
          const auto t1 = Clock::now();
          IntTensor y = apconv(w, x, s, cfg, ctx);
          const double secs = seconds_since(t1);
          if (corrupt_pending) {
            y[0] ^= 1;
            corrupt_pending = false;
          }
          const oracle::ConvGeom g{s.batch, s.in_channels, s.height, s.width, s.out_channels, s.kernel, s.stride, s.pad};
          ReportRow row{"apconv", conv_name(s), c.p, c.q, enc.name(), cfg.to_string(), checksum_of(y),
                        y == oracle::conv(xv, wv, g), tc.snapshot().staged_bits / 8, 0, secs, 0.0, 1, ""};
          if (record(std::move(row))) return out;
        }
      }
    }
    log << "apconv: " << rows << " cases matched the convolution oracle (" << fixed(seconds_since(t0), 1) << " s)\n";
  }

  if (!custom_shapes && o.graphs > 0) {
    const auto t0 = Clock::now();
    for (int i = 0; i < o.graphs; ++i) {
      const auto m = testgen::random_model(rng);
      const auto expect = oracle::model(m.graph, m.image);
      const auto t1 = Clock::now();
      const auto fused = run_model(m.graph, m.image, RunOptions{true, o.threads, std::nullopt});
      const double secs = seconds_since(t1);
      const auto unfused = run_model(m.graph, m.image, RunOptions{false, o.threads, std::nullopt});
      ReportRow row;
      row.kernel = "graph";
      row.shape = "random#" + std::to_string(i) + " (" + std::to_string(m.graph.layers().size()) + " layers)";
      row.checksum = checksum_of(fused.logits);
      row.match = fused.logits == expect && unfused.logits == expect;
      row.main_bytes = (fused.traffic.read_main_bits + fused.traffic.written_main_bits) / 8;
      row.staged_bytes = fused.traffic.staged_bits / 8;
      row.seconds = secs;
      row.runs = 1;
      if (record(std::move(row))) return out;
    }
    log << "apnn:   " << o.graphs << " random graphs, fused == unfused == oracle (" << fixed(seconds_since(t0), 1)
        << " s)\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// bench

SwitchProfile obtain_profile(const std::filesystem::path& path, std::ostream& log) {
  if (std::filesystem::exists(path)) return load_profile(path);
  log << "measuring precision-switch profile into " << path.string() << " ...\n";
  const auto run = profile_switch({128, 256}, path);
  log << "  r4=" << run.profile.r4 << " r8=" << run.profile.r8 << " t=" << run.profile.t << '\n';
  return run.profile;
}

Report run_bench(const BenchOptions& o, std::ostream& log) {
  Report rep;
  rep.command = "bench";
  rep.seed = o.seed;
  rep.threads = o.threads;
  std::mt19937_64 rng(o.seed);
  std::optional<SwitchProfile> prof;
  if (o.profile) prof = obtain_profile(*o.profile, log);

  const auto cases = o.cases.empty() ? std::vector<Case>{{1, 1}} : o.cases;
  const bool custom = !o.mnk.empty() || !o.convs.empty() || o.model;
  const auto shapes = o.mnk.empty() ? (custom ? std::vector<Mnk>{} : std::vector<Mnk>{{1024, 1024, 1024}}) : o.mnk;

  log << std::left << std::setw(10) << "kernel" << std::setw(26) << "shape" << std::setw(6) << "case"
      << std::setw(12) << "encoding" << std::setw(14) << "cfg" << std::right << std::setw(12) << "mean ms"
      << std::setw(10) << "stddev" << std::setw(10) << "GOPS" << "  note\n";
  auto print = [&](const ReportRow& r, double ops) {
    log << std::left << std::setw(10) << r.kernel << std::setw(26) << r.shape << std::setw(6)
        << (r.p ? case_name({r.p, r.q}) : "") << std::setw(12) << r.encoding << std::setw(14) << r.cfg << std::right
        << std::setw(12) << fixed(r.seconds * 1e3, 3) << std::setw(10) << fixed(r.stddev * 1e3, 3) << std::setw(10)
        << (ops > 0 ? fixed(ops / r.seconds * 1e-9, 2) : "-") << "  " << r.note << '\n';
  };

  for (const auto& c : cases) {
    const auto pairs = matmul_pairs(c.p, c.q, o.encoding);
    if (pairs.empty()) throw Error(ErrorCode::ParseError, "no legal encoding for " + case_name(c));
    const auto enc = pairs.front();
    for (const auto& s : shapes) {
      const auto wv = oracle::random_values({s.m, s.k}, c.p, enc.w, rng);
      const auto xv = oracle::random_values({s.n, s.k}, c.q, enc.x, rng);
      const auto w = decompose(wv, c.p, enc.w), x = decompose(xv, c.q, enc.x);
      const TileConfig cfg = autotune(s.m, s.n, s.k, c.p, c.q, prof.value_or(SwitchProfile{}));
      const ExecContext ctx{nullptr, nullptr, o.threads};
      IntTensor y;
      const auto t = time_runs(o.warmup, o.runs, [&] { y = apmm(w, x, cfg, ctx); });
      TrafficCounter tc;
      (void)apmm(w, x, cfg, ExecContext{&tc, nullptr, o.threads});
      const double ops = 2.0 * static_cast<double>(s.m) * static_cast<double>(s.n) * static_cast<double>(s.k);
      ReportRow row{"apmm", mnk_name(s), c.p, c.q, enc.name(), cfg.to_string(), checksum_of(y), true,
                    tc.snapshot().staged_bits / 8, 0, t.mean, t.stddev, o.runs, ""};
      if (prof) {
        const auto path = choose_path(c.p, c.q, estimate(s.m, s.n, s.k, c.p, c.q, cfg).tlp, *prof);
        row.note = "switch=" + std::string(to_string(path));
      }
      print(row, ops);
      rep.rows.push_back(row);

      if (o.reference) {
        IntTensor r;
        const auto tr = time_runs(std::min(o.warmup, 1), o.ref_runs, [&] { r = reference_gemm(wv, xv); });
        ReportRow ref{"reference", mnk_name(s), c.p, c.q, enc.name(), "", checksum_of(r), r == y, 0, 0,
                      tr.mean, tr.stddev, o.ref_runs, "speedup=" + fixed(tr.mean / t.mean, 2) + "x"};
        print(ref, ops);
        rep.rows.push_back(ref);
      }
    }
    for (const auto& s : o.convs) {
      const auto cp = conv_pairs(c.p, c.q, o.encoding);
      if (cp.empty()) throw Error(ErrorCode::ParseError, "no legal conv encoding for " + case_name(c));
      const auto xv = oracle::random_values({s.batch, s.height, s.width, s.in_channels}, c.q, cp.front().x, rng);
      const auto wv =
          oracle::random_values({s.out_channels, s.kernel, s.kernel, s.in_channels}, c.p, cp.front().w, rng);
      const auto x = to_channel_major(xv, LayoutTag::NHWC, c.q, cp.front().x);
      const auto w = decompose(wv, c.p, cp.front().w);
      const TileConfig cfg = autotune(s.out_channels, s.out_pixels(), s.kernel * s.kernel * s.in_channels, c.p, c.q,
                                      prof.value_or(SwitchProfile{}));
      const ExecContext ctx{nullptr, nullptr, o.threads};
      IntTensor y;
      const auto t = time_runs(o.warmup, o.runs, [&] { y = apconv(w, x, s, cfg, ctx); });
      const double ops = 2.0 * static_cast<double>(s.out_pixels() * s.out_channels * s.kernel * s.kernel * s.in_channels);
      TrafficCounter tc;
      (void)apconv(w, x, s, cfg, ExecContext{&tc, nullptr, o.threads});
      ReportRow row{"apconv", conv_name(s), c.p, c.q, cp.front().name(), cfg.to_string(), checksum_of(y), true,
                    tc.snapshot().staged_bits / 8, 0, t.mean, t.stddev, o.runs, ""};
      print(row, ops);
      rep.rows.push_back(row);
      if (o.reference) {
        const oracle::ConvGeom g{s.batch, s.in_channels, s.height, s.width, s.out_channels, s.kernel, s.stride, s.pad};
        IntTensor r;
        const auto tr = time_runs(std::min(o.warmup, 1), o.ref_runs, [&] { r = oracle::conv(xv, wv, g); });
        ReportRow ref{"reference", conv_name(s), c.p, c.q, cp.front().name(), "", checksum_of(r), r == y, 0, 0,
                      tr.mean, tr.stddev, o.ref_runs, "speedup=" + fixed(tr.mean / t.mean, 2) + "x"};
        print(ref, ops);
        rep.rows.push_back(ref);
      }
    }
  }

  if (o.model) {
    if (!o.image) throw Error(ErrorCode::ParseError, "--model needs --image");
    const auto g = load_model(*o.model);
    const auto img = load_image(*o.image);
    RunResult fused, unfused;
    const auto tf = time_runs(o.warmup, o.runs, [&] { fused = run_model(g, img, RunOptions{true, o.threads, prof}); });
    const auto tu =
        time_runs(o.warmup, o.runs, [&] { unfused = run_model(g, img, RunOptions{false, o.threads, prof}); });
    auto main_bytes = [](const TrafficSnapshot& t) { return (t.read_main_bits + t.written_main_bits) / 8; };
    const std::string name = o.model->filename().string();
    ReportRow f{"model", name, 0, 0, "", "fused", checksum_of(fused.logits), true, fused.traffic.staged_bits / 8,
                main_bytes(fused.traffic), tf.mean, tf.stddev, o.runs, ""};
    ReportRow u{"model", name, 0, 0, "", "unfused", checksum_of(unfused.logits), unfused.logits == fused.logits,
                unfused.traffic.staged_bits / 8, main_bytes(unfused.traffic), tu.mean, tu.stddev, o.runs,
                "traffic x" + fixed(unfused.traffic.total_bytes() / fused.traffic.total_bytes(), 2) + ", time x" +
                    fixed(tu.mean / tf.mean, 2)};
    print(f, 0);
    print(u, 0);
    rep.rows.push_back(f);
    rep.rows.push_back(u);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// run

std::string format_logits(const IntTensor& logits) {
  const auto& d = logits.dims();
  const std::size_t cols = d.empty() ? 0 : d.back();
  std::ostringstream os;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    os << logits[i] << ((i + 1) % cols == 0 ? '\n' : ' ');
  }
  return os.str();
}

IntTensor parse_logits(const std::string& text, const Shape& dims) {
  IntTensor t(dims);
  std::istringstream is(text);
  for (std::size_t i = 0; i < t.size(); ++i) {
    long v;
    if (!(is >> v)) throw Error(ErrorCode::ParseError, "golden logits: expected " + std::to_string(t.size()) + " values");
    t[i] = static_cast<std::int32_t>(v);
  }
  std::string extra;
  if (is >> extra) throw Error(ErrorCode::ParseError, "golden logits: trailing data '" + extra + "'");
  return t;
}

ModelRunOutcome run_model_command(const ModelRunOptions& o, std::ostream& log) {
  ModelRunOutcome out;
  out.report.command = "run";
  out.report.threads = o.threads;
  const auto g = load_model(o.model);
  const auto img = load_image(o.image);
  std::optional<SwitchProfile> prof;
  if (o.profile) prof = obtain_profile(*o.profile, log);

  (void)run_model(g, img, RunOptions{o.fusion, o.threads, prof});  // warm caches before timing
  const auto r = run_model(g, img, RunOptions{o.fusion, o.threads, prof});
  const auto other = run_model(g, img, RunOptions{!o.fusion, o.threads, prof});
  out.logits = r.logits;

  log << "logits (" << shape_string(r.logits.dims()) << "):\n" << format_logits(r.logits);
  log << "\nper-layer breakdown (" << (o.fusion ? "fused" : "unfused") << "):\n";
  log << std::left << std::setw(10) << "layer" << std::setw(8) << "kind" << std::right << std::setw(4) << "p"
      << std::setw(4) << "q" << "  " << std::left << std::setw(14) << "cfg" << std::setw(12) << "path" << std::right
      << std::setw(11) << "time ms" << std::setw(8) << "time%" << std::setw(13) << "traffic B" << std::setw(9)
      << "traffic%" << std::setw(14) << "stream bits" << '\n';
  double total_t = 0.0;
  for (const auto& l : r.layers) total_t += l.seconds;
  const double total_b = r.traffic.total_bytes();
  for (const auto& l : r.layers) {
    const bool input = l.name == "input" && l.p == 0;
    log << std::left << std::setw(10) << l.name << std::setw(8) << (input ? "input" : std::string(to_string(l.kind)))
        << std::right << std::setw(4) << l.p << std::setw(4) << l.q << "  " << std::left << std::setw(14)
        << (input ? "-" : l.cfg.to_string()) << std::setw(12) << (input ? "-" : std::string(to_string(l.path)))
        << std::right << std::setw(11) << fixed(l.seconds * 1e3, 3) << std::setw(8)
        << fixed(total_t > 0 ? 100.0 * l.seconds / total_t : 0.0, 1) << std::setw(13) << fixed(l.traffic.total_bytes(), 0)
        << std::setw(9) << fixed(total_b > 0 ? 100.0 * l.traffic.total_bytes() / total_b : 0.0, 1) << std::setw(14)
        << l.output_stream_bits << '\n';
    ReportRow row;
    row.kernel = "layer";
    row.shape = l.name;
    row.p = l.p;
    row.q = l.q;
    row.cfg = input ? "" : l.cfg.to_string();
    row.staged_bytes = l.traffic.staged_bits / 8;
    row.main_bytes = (l.traffic.read_main_bits + l.traffic.written_main_bits) / 8;
    row.seconds = l.seconds;
    row.runs = 1;
    row.note = input ? "input" : std::string(to_string(l.path));
    out.report.rows.push_back(row);
  }
  const auto& fused = o.fusion ? r : other;
  const auto& unfused = o.fusion ? other : r;
  log << "\nfusion: fused " << fixed(fused.traffic.total_bytes(), 0) << " B, unfused "
      << fixed(unfused.traffic.total_bytes(), 0) << " B (x" << fixed(unfused.traffic.total_bytes() / fused.traffic.total_bytes(), 2)
      << "); fused " << fixed(fused.seconds * 1e3, 3) << " ms, unfused " << fixed(unfused.seconds * 1e3, 3)
      << " ms; logits " << (fused.logits == unfused.logits ? "identical" : "DIFFER") << '\n';

  ReportRow model;
  model.kernel = "model";
  model.shape = o.model.filename().string();
  model.cfg = o.fusion ? "fused" : "unfused";
  model.checksum = checksum_of(r.logits);
  model.match = fused.logits == unfused.logits;
  model.staged_bytes = r.traffic.staged_bits / 8;
  model.main_bytes = (r.traffic.read_main_bits + r.traffic.written_main_bits) / 8;
  model.seconds = r.seconds;
  model.runs = 1;

  if (o.logits_out) {
    std::ofstream os(*o.logits_out);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + o.logits_out->string());
    os << format_logits(r.logits);
  }
  if (o.expect) {
    std::ifstream is(*o.expect);
    if (!is) throw Error(ErrorCode::IoError, "cannot read golden logits " + o.expect->string());
    std::stringstream ss;
    ss << is.rdbuf();
    out.golden_match = parse_logits(ss.str(), r.logits.dims()) == r.logits;
    model.note = out.golden_match ? "golden match" : "golden MISMATCH";
    log << "golden " << o.expect->string() << ": " << (out.golden_match ? "match" : "MISMATCH") << '\n';
  }
  model.match = model.match && out.golden_match;
  out.report.rows.push_back(model);
  return out;
}

}  // namespace apbit::cli

#include "cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <thread>

#include "apbit/error.hpp"
#include "commands.hpp"

namespace apbit::cli {

namespace {

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

template <typename T, typename F>
std::vector<T> parse_all(const std::vector<std::string>& raw, F&& parse) {
  std::vector<T> out;
  for (const auto& r : raw) {
    // Accept repeated flags as well as ';'-separated lists.
    std::size_t start = 0;
    while (start <= r.size()) {
      const auto end = r.find(';', start);
      const auto piece = r.substr(start, end == std::string::npos ? std::string::npos : end - start);
      if (!piece.empty()) out.push_back(parse(piece));
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }
  return out;
}

std::vector<Case> parse_cases(const std::vector<std::string>& raw) {
  std::vector<std::string> split;
  for (const auto& r : raw) {
    std::size_t start = 0;
    while (true) {
      const auto end = r.find(',', start);
      split.push_back(r.substr(start, end == std::string::npos ? std::string::npos : end - start));
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }
  return parse_all<Case>(split, parse_case);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"apbit: arbitrary-precision bit-plane matmul and convolution"};
  app.require_subcommand(1);

  std::vector<std::string> cases, mnk, convs;
  std::string encoding = "all";
  std::uint64_t seed = 1;
  unsigned threads = default_threads();
  std::string json, csv;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--case", cases, "precision case(s) wPaQ, e.g. w1a2 (comma separated or repeated)");
    sub->add_option("--mnk", mnk, "matmul shape M,N,K (repeatable)");
    sub->add_option("--conv", convs, "conv shape BS,Cin,H,W,Cout,K,stride,pad (repeatable)");
    sub->add_option("--seed", seed, "seed for randomized inputs")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads")->capture_default_str();
    sub->add_option("--json", json, "write the report as JSON ('-' for stdout)");
    sub->add_option("--csv", csv, "write the report as CSV ('-' for stdout)");
  };

  auto* verify = app.add_subcommand("verify", "check the kernels bit-exactly against scalar oracles");
  common(verify);
  verify->add_option("--encoding", encoding, "encoding cases: all, 01, pm1, mixed")->capture_default_str();
  int conv_samples = 12, graphs = 50;
  bool corrupt = false, verbose = false;
  verify->add_option("--conv-samples", conv_samples, "random conv shapes per case and encoding")->capture_default_str();
  verify->add_option("--graphs", graphs, "random networks checked fused vs unfused")->capture_default_str();
  verify->add_flag("--corrupt-bit", corrupt, "flip one output bit of the first case (fault-injection check)");
  verify->add_flag("-v,--verbose", verbose, "print every case");

  auto* bench = app.add_subcommand("bench", "time the emulated kernels against the scalar reference");
  common(bench);
  std::string bench_encoding = "01";
  int runs = 200, warmup = 10, ref_runs = 3;
  bool no_reference = false;
  std::string model, image, profile;
  bench->add_option("--encoding", bench_encoding, "encoding case: 01, pm1, mixed")->capture_default_str();
  bench->add_option("--runs", runs, "timed runs per kernel")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "untimed warmup runs")->capture_default_str()->check(CLI::NonNegativeNumber);
  bench->add_option("--ref-runs", ref_runs, "timed runs of the scalar reference")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_flag("--no-reference", no_reference, "skip the scalar reference");
  bench->add_option("--model", model, "also time a model config, fused and unfused");
  bench->add_option("--image", image, ".bpt image for --model");
  bench->add_option("--profile", profile, "precision-switch profile (created when missing; 'default' uses APBIT_PROFILE or ~/.apbit_profile)");

  auto* run = app.add_subcommand("run", "run a model on an image");
  std::string run_model_path, run_image, expect, logits_out, run_profile, run_json;
  bool no_fusion = false;
  unsigned run_threads = default_threads();
  run->add_option("model", run_model_path, "model config (YAML)")->required();
  run->add_option("image", run_image, "image tensor (.bpt, 8-bit)")->required();
  run->add_flag("--no-fusion", no_fusion, "materialize 32-bit outputs and run the epilogue as separate passes");
  run->add_option("--threads", run_threads, "worker threads")->capture_default_str();
  run->add_option("--profile", run_profile, "precision-switch profile ('default' for the standard location)");
  run->add_option("--expect", expect, "golden logits file; exit 1 on mismatch");
  run->add_option("--logits-out", logits_out, "write logits as text");
  run->add_option("--json", run_json, "write the report as JSON ('-' for stdout)");

  std::vector<std::string> argv_store{"apbit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto profile_path = [](const std::string& p) -> std::optional<std::filesystem::path> {
    if (p.empty()) return std::nullopt;
    if (p == "default") return default_profile_path();
    return std::filesystem::path(p);
  };

  try {
    if (verify->parsed()) {
      VerifyOptions o;
      o.cases = parse_cases(cases);
      o.mnk = parse_all<Mnk>(mnk, parse_mnk);
      o.convs = parse_all<ConvShape>(convs, parse_conv);
      o.encoding = parse_encoding_filter(encoding);
      o.seed = seed;
      o.threads = threads;
      o.conv_samples = conv_samples;
      o.graphs = graphs;
      o.corrupt_bit = corrupt;
      o.verbose = verbose;
      const auto r = run_verify(o, out);
      if (!json.empty()) save_report(r.report, json);
      if (!csv.empty()) save_report(r.report, csv, true);
      if (r.first_failure) {
        err << "verify: MISMATCH in " << *r.first_failure << '\n';
        return kExitMismatch;
      }
      out << "verify: " << r.report.rows.size() << " cases, all bit-exact\n";
      return kExitOk;
    }
    if (bench->parsed()) {
      BenchOptions o;
      o.cases = parse_cases(cases);
      o.mnk = parse_all<Mnk>(mnk, parse_mnk);
      o.convs = parse_all<ConvShape>(convs, parse_conv);
      o.encoding = parse_encoding_filter(bench_encoding);
      o.runs = runs;
      o.warmup = warmup;
      o.ref_runs = ref_runs;
      o.reference = !no_reference;
      if (!model.empty()) o.model = model;
      if (!image.empty()) o.image = image;
      o.profile = profile_path(profile);
      o.seed = seed;
      o.threads = threads;
      const auto r = run_bench(o, out);
      if (!json.empty()) save_report(r, json);
      if (!csv.empty()) save_report(r, csv, true);
      return r.all_match() ? kExitOk : kExitMismatch;
    }
    ModelRunOptions o;
    o.model = run_model_path;
    o.image = run_image;
    o.fusion = !no_fusion;
    o.threads = run_threads;
    o.profile = profile_path(run_profile);
    if (!expect.empty()) o.expect = expect;
    if (!logits_out.empty()) o.logits_out = logits_out;
    const auto r = run_model_command(o, out);
    if (!run_json.empty()) save_report(r.report, run_json);
    return r.report.all_match() ? kExitOk : kExitMismatch;
  } catch (const Error& e) {
    err << "apbit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "apbit: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace apbit::cli

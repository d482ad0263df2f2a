#include "apbit/tuner.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include "apbit/apmm.hpp"
#include "apbit/error.hpp"
#include "apbit/reference.hpp"

namespace apbit {

// ---------------------------------------------------------------------------
// Rational

Rational::Rational(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw Error(ErrorCode::ValueOutOfRange, "zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

std::string Rational::to_string() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  using u128 = unsigned __int128;
  return static_cast<u128>(a.num_) * b.den_ <=> static_cast<u128>(b.num_) * a.den_;
}

// ---------------------------------------------------------------------------
// Performance model

PerfEstimate estimate(std::size_t m, std::size_t n, std::size_t /*k*/, int p, int q, const TileConfig& cfg) {
  cfg.validate();
  const std::uint64_t bm = static_cast<std::uint64_t>(cfg.b_m);
  const std::uint64_t bn = static_cast<std::uint64_t>(cfg.b_n);
  return PerfEstimate{
      Rational(static_cast<std::uint64_t>(p) * m * static_cast<std::uint64_t>(q) * n, bm * bn),
      Rational(2 * bm * bn, bm + bn),
      cfg,
  };
}

void SwitchProfile::validate() const {
  if (!(r4 > 0.0) || !(r8 > 0.0) || !(t > 0.0)) {
    throw Error(ErrorCode::ValueOutOfRange, "profile ratios and threshold must be positive");
  }
}

namespace {

// tlp >= threshold, exact when the threshold is integral.
bool at_least(const Rational& tlp, double threshold) {
  if (threshold <= 0.0) return true;
  if (threshold == std::floor(threshold) && threshold < 9.0e18) {
    return tlp >= Rational(static_cast<std::uint64_t>(threshold), 1);
  }
  return static_cast<long double>(tlp.num()) >= static_cast<long double>(threshold) * tlp.den();
}

struct QueueOrder {
  // Max-heap: "less" means lower priority.
  bool operator()(const PerfEstimate& a, const PerfEstimate& b) const {
    if (a.tlp != b.tlp) return a.tlp < b.tlp;
    if (a.ci != b.ci) return a.ci < b.ci;
    if (a.cfg.b_m != b.cfg.b_m) return a.cfg.b_m < b.cfg.b_m;
    return a.cfg.b_n < b.cfg.b_n;
  }
};

}  // namespace

TileConfig autotune(std::size_t m, std::size_t n, std::size_t k, int p, int q, const SwitchProfile& profile) {
  std::priority_queue<PerfEstimate, std::vector<PerfEstimate>, QueueOrder> queue;
  for (const auto& cfg : legal_tile_grid(kDefaultBlockK)) queue.push(estimate(m, n, k, p, q, cfg));

  PerfEstimate best = queue.top();
  if (!at_least(best.tlp, profile.t)) return best.cfg;
  queue.pop();
  while (!queue.empty() && at_least(queue.top().tlp, profile.t)) {
    if (queue.top().ci > best.ci) best = queue.top();
    queue.pop();
  }
  return best.cfg;
}

std::string_view to_string(ComputePath path) {
  switch (path) {
    case ComputePath::Emulate: return "Emulate";
    case ComputePath::NativeInt4: return "NativeInt4";
    case ComputePath::NativeInt8: return "NativeInt8";
  }
  return "?";
}

ComputePath choose_path(int p, int q, double tlp, const SwitchProfile& profile) {
  const bool small = p <= 4 && q <= 4;
  const double r = small ? profile.r4 : profile.r8;
  if (static_cast<double>(p * q) < r || tlp < profile.t) return ComputePath::Emulate;
  return small ? ComputePath::NativeInt4 : ComputePath::NativeInt8;
}

ComputePath choose_path(int p, int q, const Rational& tlp, const SwitchProfile& profile) {
  const bool small = p <= 4 && q <= 4;
  const double r = small ? profile.r4 : profile.r8;
  if (static_cast<double>(p * q) < r || !at_least(tlp, profile.t)) return ComputePath::Emulate;
  return small ? ComputePath::NativeInt4 : ComputePath::NativeInt8;
}

// ---------------------------------------------------------------------------
// Profile file

namespace {

// flock-based advisory lock on a sidecar file.
class FileLock {
 public:
  FileLock(const std::filesystem::path& path, bool exclusive) {
    const auto lock_path = path.string() + ".lock";
    fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ >= 0) ::flock(fd_, exclusive ? LOCK_EX : LOCK_SH);
  }
  ~FileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

SwitchProfile parse_profile(std::istream& is, const std::string& origin) {
  SwitchProfile prof;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "r4") prof.r4 = std::stod(value);
      else if (key == "r8") prof.r8 = std::stod(value);
      else if (key == "t") prof.t = std::stod(value);
      else if (key == "host") prof.host = value;
      else if (key == "timestamp") prof.timestamp = value;
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, origin + ":" + std::to_string(lineno) + ": bad number '" + value + "'");
    }
  }
  prof.validate();
  return prof;
}

std::string hostname() {
  char buf[256] = {};
  if (::gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  ::gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_profile_unlocked(const std::filesystem::path& path, const SwitchProfile& profile) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot write profile " + path.string());
  os.precision(17);
  os << "r4=" << profile.r4 << "\n"
     << "r8=" << profile.r8 << "\n"
     << "t=" << profile.t << "\n"
     << "host=" << profile.host << "\n"
     << "timestamp=" << profile.timestamp << "\n";
  if (!os) throw Error(ErrorCode::IoError, "failed writing profile " + path.string());
}

std::optional<SwitchProfile> read_profile_unlocked(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) return std::nullopt;
  return parse_profile(is, path.string());
}

template <class F>
double best_seconds(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

}  // namespace

SwitchProfile load_profile(const std::filesystem::path& path) {
  FileLock lock(path, false);
  auto prof = read_profile_unlocked(path);
  if (!prof) throw Error(ErrorCode::IoError, "cannot read profile " + path.string());
  return *prof;
}

void save_profile(const std::filesystem::path& path, const SwitchProfile& profile) {
  profile.validate();
  FileLock lock(path, true);
  write_profile_unlocked(path, profile);
}

std::filesystem::path default_profile_path() {
  if (const char* env = std::getenv("APBIT_PROFILE"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return std::filesystem::path(home) / ".apbit_profile";
  return "apbit_profile";
}

ProfileRun profile_switch(const std::vector<std::size_t>& bench_sizes, const std::filesystem::path& path,
                          double tlp_threshold) {
  std::mt19937 rng(12345);
  double sum4 = 0.0, sum8 = 0.0;
  int samples = 0;
  for (std::size_t n : bench_sizes) {
    if (n == 0) continue;
    std::uniform_int_distribution<int> bit(0, 1);
    IntTensor a({n, n}), b({n, n});
    for (auto& v : a.values()) v = bit(rng);
    for (auto& v : b.values()) v = bit(rng);
    const auto wa = decompose(a, 1, Encoding::ZeroOne);
    const auto xb = decompose(b, 1, Encoding::ZeroOne);
    const TileConfig cfg = autotune(n, n, n, 1, 1);
    const double t_emul = best_seconds(3, [&] { (void)apmm(wa, xb, cfg); });

    std::vector<std::int8_t> a8(n * n), b8(n * n);
    std::vector<std::int32_t> y(n * n);
    auto fill = [&](int hi) {
      std::uniform_int_distribution<int> d(0, hi);
      for (auto& v : a8) v = static_cast<std::int8_t>(d(rng));
      for (auto& v : b8) v = static_cast<std::int8_t>(d(rng));
    };
    fill(15);
    const double t4 = best_seconds(3, [&] { reference_gemm_i8(a8, b8, y, n, n, n); });
    fill(127);
    const double t8 = best_seconds(3, [&] { reference_gemm_i8(a8, b8, y, n, n, n); });
    sum4 += t4 / std::max(t_emul, 1e-12);
    sum8 += t8 / std::max(t_emul, 1e-12);
    ++samples;
  }
  if (samples == 0) throw Error(ErrorCode::ValueOutOfRange, "profile_switch needs a positive size");

  ProfileRun run;
  run.profile.r4 = sum4 / samples;
  run.profile.r8 = sum8 / samples;
  run.profile.t = tlp_threshold;
  run.profile.host = hostname();
  run.profile.timestamp = utc_timestamp();

  FileLock lock(path, true);
  try {
    run.previous = read_profile_unlocked(path);
  } catch (const Error&) {
    run.previous.reset();  // unreadable old profile is replaced
  }
  if (run.previous) {
    auto close = [](double a, double b) { return std::abs(a - b) <= 0.25 * b; };
    run.stable = close(run.profile.r4, run.previous->r4) && close(run.profile.r8, run.previous->r8);
    if (!run.stable) {
      std::cerr << "warning: switch profile moved more than 25% from the previous run (r4 "
                << run.previous->r4 << " -> " << run.profile.r4 << ", r8 " << run.previous->r8 << " -> "
                << run.profile.r8 << ")\n";
    }
  }
  write_profile_unlocked(path, run.profile);
  return run;
}

}  // namespace apbit

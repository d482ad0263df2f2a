#pragma once

#include <atomic>
#include <cstdint>

namespace apbit {

struct TrafficSnapshot {
  std::uint64_t read_main_bits = 0;
  std::uint64_t written_main_bits = 0;
  std::uint64_t staged_bits = 0;

  double bytes_read_main() const { return read_main_bits / 8.0; }
  double bytes_written_main() const { return written_main_bits / 8.0; }
  double bytes_staged() const { return staged_bits / 8.0; }
  std::uint64_t total_bits() const { return read_main_bits + written_main_bits + staged_bits; }
  double total_bytes() const { return total_bits() / 8.0; }

  TrafficSnapshot operator-(const TrafficSnapshot& o) const {
    return {read_main_bits - o.read_main_bits, written_main_bits - o.written_main_bits,
            staged_bits - o.staged_bits};
  }
  bool operator==(const TrafficSnapshot&) const = default;
};

// Simulated memory traffic. "main" is the global buffer space that outlives a
// kernel; "staged" counts tile fills into a block's staging buffer. Counted in
// bits so packed low-bit streams are exact.
class TrafficCounter {
 public:
  void add_read_main(std::uint64_t bits) { read_.fetch_add(bits, std::memory_order_relaxed); }
  void add_written_main(std::uint64_t bits) { written_.fetch_add(bits, std::memory_order_relaxed); }
  void add_staged(std::uint64_t bits) { staged_.fetch_add(bits, std::memory_order_relaxed); }

  TrafficSnapshot snapshot() const {
    return {read_.load(std::memory_order_relaxed), written_.load(std::memory_order_relaxed),
            staged_.load(std::memory_order_relaxed)};
  }
  void reset() {
    read_ = 0;
    written_ = 0;
    staged_ = 0;
  }

 private:
  std::atomic<std::uint64_t> read_{0};
  std::atomic<std::uint64_t> written_{0};
  std::atomic<std::uint64_t> staged_{0};
};

struct OpSnapshot {
  std::uint64_t decompose_ops = 0;  // one per (element, plane) extracted
  std::uint64_t combine_ops = 0;    // one per weighted partial added into Y
  std::uint64_t bmma_tiles = 0;     // 8x8x128 primitive invocations

  // Binary multiply-accumulates performed by the bmma primitive.
  std::uint64_t mac_ops() const { return bmma_tiles * 8ull * 8ull * 128ull; }
};

class OpCounter {
 public:
  void add_decompose(std::uint64_t n) { decompose_.fetch_add(n, std::memory_order_relaxed); }
  void add_combine(std::uint64_t n) { combine_.fetch_add(n, std::memory_order_relaxed); }
  void add_bmma(std::uint64_t n) { bmma_.fetch_add(n, std::memory_order_relaxed); }

  OpSnapshot snapshot() const {
    return {decompose_.load(std::memory_order_relaxed), combine_.load(std::memory_order_relaxed),
            bmma_.load(std::memory_order_relaxed)};
  }
  void reset() {
    decompose_ = 0;
    combine_ = 0;
    bmma_ = 0;
  }

 private:
  std::atomic<std::uint64_t> decompose_{0};
  std::atomic<std::uint64_t> combine_{0};
  std::atomic<std::uint64_t> bmma_{0};
};

// Optional instrumentation and parallelism knobs threaded through kernels.
struct ExecContext {
  TrafficCounter* traffic = nullptr;
  OpCounter* ops = nullptr;
  unsigned threads = 1;
};

}  // namespace apbit

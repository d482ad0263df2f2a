#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace apbit::cli {

// One measured or verified case. Fields that do not apply stay at zero/empty.
struct ReportRow {
  std::string kernel;    // apmm | apconv | reference | model | layer | graph
  std::string shape;     // "M,N,K", "BS,Cin,H,W,Cout,K,stride,pad" or a layer name
  int p = 0;
  int q = 0;
  std::string encoding;  // "w01/x01", "wpm1/xpm1", ...
  std::string cfg;       // b_m x b_n x b_k
  std::uint64_t checksum = 0;
  bool match = true;
  std::uint64_t staged_bytes = 0;
  std::uint64_t main_bytes = 0;
  double seconds = 0.0;  // wall time; the mean when runs > 1
  double stddev = 0.0;
  int runs = 0;
  std::string note;

  bool operator==(const ReportRow&) const = default;
};

struct Report {
  std::string command;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::vector<ReportRow> rows;

  bool all_match() const;
  bool operator==(const Report&) const = default;
};

std::string to_json(const Report& r);
Report report_from_json(const std::string& text);

void write_csv(std::ostream& os, const Report& r);

// "-" writes to stdout.
void save_report(const Report& r, const std::string& target, bool csv = false);

// FNV-1a over the int32 outputs of a kernel.
std::uint64_t checksum(const std::int32_t* data, std::size_t n);

}  // namespace apbit::cli

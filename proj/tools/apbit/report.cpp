#include "report.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>

#include "apbit/error.hpp"

namespace apbit::cli {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ReportRow, kernel, shape, p, q, encoding, cfg, checksum, match, staged_bytes,
                                   main_bytes, seconds, stddev, runs, note)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Report, command, seed, threads, rows)

bool Report::all_match() const {
  for (const auto& r : rows)
    if (!r.match) return false;
  return true;
}

std::string to_json(const Report& r) { return nlohmann::json(r).dump(2); }

Report report_from_json(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<Report>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_csv(std::ostream& os, const Report& r) {
  os << "kernel,shape,p,q,encoding,cfg,checksum,match,staged_bytes,main_bytes,seconds,stddev,runs,note\n";
  os << std::setprecision(9);
  for (const auto& x : r.rows) {
    os << csv_field(x.kernel) << ',' << csv_field(x.shape) << ',' << x.p << ',' << x.q << ',' << csv_field(x.encoding)
       << ',' << csv_field(x.cfg) << ',' << x.checksum << ',' << (x.match ? 1 : 0) << ',' << x.staged_bytes << ','
       << x.main_bytes << ',' << x.seconds << ',' << x.stddev << ',' << x.runs << ',' << csv_field(x.note) << '\n';
  }
}

void save_report(const Report& r, const std::string& target, bool csv) {
  if (target == "-") {
    if (csv) {
      write_csv(std::cout, r);
    } else {
      std::cout << to_json(r) << '\n';
    }
    return;
  }
  std::ofstream os(target);
  if (!os) throw Error(ErrorCode::IoError, "cannot write report " + target);
  if (csv) {
    write_csv(os, r);
  } else {
    os << to_json(r) << '\n';
  }
}

std::uint64_t checksum(const std::int32_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = static_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace apbit::cli

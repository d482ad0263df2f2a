#include "apbit/bpt_io.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>

namespace apbit {

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw Error(ErrorCode::IoError, "truncated .bpt stream");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_bpt(std::ostream& os, const BitPlaneTensor& t) {
  os.write("APBT", 4);
  put_le<std::uint16_t>(os, kBptVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.encoding()));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.bits()));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims().size()));
  for (auto d : t.dims()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (Word w : t.words()) put_le<std::uint64_t>(os, w);
  if (!os) throw Error(ErrorCode::IoError, "failed writing .bpt stream");
}

BitPlaneTensor read_bpt(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || std::string_view(magic.data(), 4) != "APBT") {
    throw Error(ErrorCode::IoError, "bad .bpt magic");
  }
  const auto version = get_le<std::uint16_t>(is);
  if (version != kBptVersion) {
    throw Error(ErrorCode::IoError, "unsupported .bpt version " + std::to_string(version));
  }
  const auto enc = get_le<std::uint8_t>(is);
  if (enc > 1) throw Error(ErrorCode::BadEncoding, "bad encoding byte " + std::to_string(enc));
  const int bits = get_le<std::uint8_t>(is);
  const int rank = get_le<std::uint8_t>(is);
  Shape dims(rank);
  for (auto& d : dims) d = get_le<std::uint32_t>(is);

  // Header validation happens in the constructor; it also sizes the payload.
  BitPlaneTensor shape_only(dims, bits, static_cast<Encoding>(enc));
  std::vector<Word> words(shape_only.words().size());
  for (auto& w : words) w = get_le<std::uint64_t>(is);
  return BitPlaneTensor::from_words(std::move(dims), bits, static_cast<Encoding>(enc),
                                    std::move(words));
}

void save_bpt(const std::filesystem::path& path, const BitPlaneTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_bpt(os, t);
}

BitPlaneTensor load_bpt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return read_bpt(is);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace apbit

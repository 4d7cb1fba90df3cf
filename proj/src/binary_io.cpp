#include "setl/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "setl/error.hpp"

namespace setl::binio {

namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    fail(ErrorKind::format, std::string("truncated input while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t value) { put_le(out, value); }
void write_i32(std::ostream& out, std::int32_t value) { put_le(out, static_cast<std::uint32_t>(value)); }
void write_u64(std::ostream& out, std::uint64_t value) { put_le(out, value); }
void write_f64(std::ostream& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

void write_f64s(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_f64(out, v);
}

void write_string(std::ostream& out, std::string_view s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

std::uint32_t read_u32(std::istream& in, const char* what) { return get_le<std::uint32_t>(in, what); }
std::int32_t read_i32(std::istream& in, const char* what) {
  return static_cast<std::int32_t>(get_le<std::uint32_t>(in, what));
}
std::uint64_t read_u64(std::istream& in, const char* what) { return get_le<std::uint64_t>(in, what); }
double read_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, what));
}

void read_f64s(std::istream& in, std::span<double> out, const char* what) {
  for (double& v : out) v = read_f64(in, what);
}

std::string read_string(std::istream& in, const char* what, std::uint32_t max_len) {
  const std::uint32_t len = read_u32(in, what);
  if (len > max_len) fail(ErrorKind::format, std::string("implausible string length for ") + what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) {
    fail(ErrorKind::format, std::string("truncated input while reading ") + what);
  }
  return s;
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    fail(ErrorKind::format, "bad magic: expected " + std::string(magic));
  }
}

}  // namespace setl::binio

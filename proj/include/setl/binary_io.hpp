#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Little-endian primitives shared by the FEAT1, IVEX1 and TDNNCK2 formats.
namespace setl::binio {

void write_u32(std::ostream& out, std::uint32_t value);
void write_i32(std::ostream& out, std::int32_t value);
void write_u64(std::ostream& out, std::uint64_t value);
void write_f64(std::ostream& out, double value);
void write_f64s(std::ostream& out, std::span<const double> values);
void write_string(std::ostream& out, std::string_view s);  // u32 length + bytes
void write_magic(std::ostream& out, std::string_view magic);

// Readers throw Error(format) on short reads; `what` names the field.
std::uint32_t read_u32(std::istream& in, const char* what);
std::int32_t read_i32(std::istream& in, const char* what);
std::uint64_t read_u64(std::istream& in, const char* what);
double read_f64(std::istream& in, const char* what);
void read_f64s(std::istream& in, std::span<double> out, const char* what);
std::string read_string(std::istream& in, const char* what, std::uint32_t max_len = 1u << 20);
void expect_magic(std::istream& in, std::string_view magic);

}  // namespace setl::binio

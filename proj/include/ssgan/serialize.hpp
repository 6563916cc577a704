#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan {

// Little-endian binary helpers shared by every on-disk format.
namespace binio {

void write_magic(std::ostream& os, std::string_view magic);
// Throws IoError naming `what` if the next bytes are not `magic`.
void expect_magic(std::istream& is, std::string_view magic, std::string_view what);

void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);
void write_f32(std::ostream& os, float v);
float read_f32(std::istream& is);
void write_f64(std::ostream& os, double v);
double read_f64(std::istream& is);
void write_f32_array(std::ostream& os, const float* data, std::size_t n);
void read_f32_array(std::istream& is, float* data, std::size_t n);
void write_string(std::ostream& os, std::string_view s);
std::string read_string(std::istream& is);

}  // namespace binio

// "TSR1", u32 rank, u32 dims..., float32 data (all little-endian).
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace ssgan

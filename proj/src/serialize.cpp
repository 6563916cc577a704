#include "ssgan/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ssgan/error.hpp"

namespace ssgan {

namespace binio {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

void check(std::istream& is, const char* what) {
  if (!is) throw IoError(std::string("unexpected end of stream while reading ") + what);
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  std::string buf(magic.size(), '\0');
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is || buf != magic) {
    throw IoError(std::string(what) + ": bad header, expected \"" + std::string(magic) +
                  "\"");
  }
}

void write_u32(std::ostream& os, std::uint32_t v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  check(is, "u32");
  return to_le(v);
}

void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }

float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

void write_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  write_u32(os, static_cast<std::uint32_t>(bits));
  write_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

double read_f64(std::istream& is) {
  const std::uint64_t lo = read_u32(is);
  const std::uint64_t hi = read_u32(is);
  return std::bit_cast<double>(lo | (hi << 32));
}

void write_f32_array(std::ostream& os, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
  } else {
    for (std::size_t i = 0; i < n; ++i) write_f32(os, data[i]);
  }
}

void read_f32_array(std::istream& is, float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
    check(is, "float32 array");
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = read_f32(is);
  }
}

void write_string(std::ostream& os, std::string_view s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_u32(is);
  if (n > (1u << 26)) throw IoError("string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  is.read(s.data(), n);
  check(is, "string");
  return s;
}

}  // namespace binio

void write_tensor(std::ostream& os, const Tensor& t) {
  binio::write_magic(os, "TSR1");
  binio::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) binio::write_u32(os, static_cast<std::uint32_t>(d));
  binio::write_f32_array(os, t.data().data(), t.numel());
}

Tensor read_tensor(std::istream& is) {
  binio::expect_magic(is, "TSR1", "tensor");
  const auto rank = binio::read_u32(is);
  if (rank > 8) throw IoError("tensor rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  for (auto& d : shape) d = binio::read_u32(is);
  const auto n = shape_numel(shape);
  if (n > (std::size_t{1} << 30)) throw IoError("tensor too large: " + shape_string(shape));
  std::vector<float> values(n);
  binio::read_f32_array(is, values.data(), n);
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_tensor(os, t);
  if (!os) throw IoError("failed writing " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_tensor(is);
}

}  // namespace ssgan

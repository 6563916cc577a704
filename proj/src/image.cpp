#include "ssgan/image.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <vector>

#include "ssgan/error.hpp"

namespace ssgan {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(is, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

unsigned char to_byte(float v) {
  const float c = std::fmin(1.0f, std::fmax(0.0f, v));
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image " + path);
  if (next_token(is) != "P5") throw IoError(path + ": not a binary PGM (P5)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token(is));
    height = std::stoi(next_token(is));
    maxval = std::stoi(next_token(is));
  } catch (const std::exception&) {
    throw IoError(path + ": malformed PGM header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError(path + ": unsupported PGM geometry or maxval");
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw IoError(path + ": truncated PGM data");
  Image img(height, width);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j)
      img(i, j) = static_cast<float>(bytes[static_cast<std::size_t>(i) * width + j]) /
                  static_cast<float>(maxval);
  return img;
}

void write_pgm(const std::string& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.size()));
  for (Eigen::Index i = 0; i < image.rows(); ++i)
    for (Eigen::Index j = 0; j < image.cols(); ++j)
      bytes[static_cast<std::size_t>(i * image.cols() + j)] = to_byte(image(i, j));
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path);
}

void write_ppm(const std::string& path, const Image& r, const Image& g, const Image& b) {
  if (r.rows() != g.rows() || r.rows() != b.rows() || r.cols() != g.cols() ||
      r.cols() != b.cols()) {
    throw DimensionError("write_ppm: channel planes differ in size");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "P6\n" << r.cols() << ' ' << r.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      const unsigned char px[3] = {to_byte(r(i, j)), to_byte(g(i, j)), to_byte(b(i, j))};
      os.write(reinterpret_cast<const char*>(px), 3);
    }
  if (!os) throw IoError("failed writing " + path);
}

std::optional<float> otsu_threshold(const Image& image) {
  std::array<double, 256> hist{};
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    hist[to_byte(image.data()[i])] += 1.0;
  }
  const double total = static_cast<double>(image.size());
  double sum_all = 0.0;
  for (int t = 0; t < 256; ++t) sum_all += t * hist[t];

  // Between-class variance for "background = bins <= t".
  std::array<double, 256> between{};
  double w0 = 0.0, sum0 = 0.0, best = 0.0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
    between[t] = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    best = std::max(best, between[t]);
  }
  if (best <= 0.0) return std::nullopt;

  // Middle of the first plateau of maximal bins.
  const double tol = best * 1e-12;
  int first = 0;
  while (between[first] < best - tol) ++first;
  int last = first;
  while (last + 1 < 255 && between[last + 1] >= best - tol) ++last;
  const int t = (first + last) / 2;
  return (static_cast<float>(t) + 0.5f) / 255.0f;
}

MaskResult binarize_mask(const Image& image, std::optional<float> threshold) {
  MaskResult out;
  if (!threshold) {
    threshold = otsu_threshold(image);
    if (!threshold) {
      out.mask = Image::Zero(image.rows(), image.cols());
      out.constant_image = true;
      out.threshold = std::numeric_limits<float>::infinity();
      return out;
    }
  }
  out.threshold = *threshold;
  out.mask = (image >= *threshold).cast<float>();
  return out;
}

}  // namespace ssgan

#include "showthru/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "showthru/rng.hpp"

namespace showthru {

namespace {

std::string lower_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (char& c : ext) c = char(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// --- PGM (P5) ---------------------------------------------------------------

int pnm_read_int(std::FILE* f, const std::string& path) {
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (!std::isspace(c)) {
      break;
    }
    c = std::fgetc(f);
  }
  if (c == EOF || !std::isdigit(c))
    throw std::runtime_error("malformed PGM header: " + path);
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1 << 30) throw std::runtime_error("malformed PGM header: " + path);
    c = std::fgetc(f);
  }
  return int(v);
}

ImageGray load_pgm(std::FILE* f, const std::string& path) {
  if (std::fgetc(f) != 'P' || std::fgetc(f) != '5')
    throw std::runtime_error("unsupported PGM type (want binary P5): " + path);
  const int w = pnm_read_int(f, path);
  const int h = pnm_read_int(f, path);
  const int maxval = pnm_read_int(f, path);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
    throw std::runtime_error("malformed PGM header: " + path);
  // Exactly one whitespace byte separates the header from the raster; the
  // int reader has already consumed it.
  ImageGray img(w, h);
  const size_t n = img.pixel_count();
  const double scale = 1.0 / maxval;
  if (maxval <= 255) {
    std::vector<uint8_t> buf(n);
    if (std::fread(buf.data(), 1, n, f) != n)
      throw std::runtime_error("truncated PGM raster: " + path);
    for (size_t i = 0; i < n; ++i) img.data[i] = buf[i] * scale;
  } else {
    std::vector<uint8_t> buf(2 * n);
    if (std::fread(buf.data(), 1, 2 * n, f) != 2 * n)
      throw std::runtime_error("truncated PGM raster: " + path);
    for (size_t i = 0; i < n; ++i)
      img.data[i] = ((buf[2 * i] << 8) | buf[2 * i + 1]) * scale;
  }
  return img;
}

void save_pgm(const ImageGray& img, const std::string& path, int bits) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write file: " + path);
  const int maxval = (bits == 8) ? 255 : 65535;
  std::fprintf(f.get(), "P5\n%d %d\n%d\n", img.width, img.height, maxval);
  const size_t n = img.pixel_count();
  if (bits == 8) {
    std::vector<uint8_t> buf(n);
    for (size_t i = 0; i < n; ++i) {
      const double v = std::clamp(img.data[i], 0.0, 1.0);
      buf[i] = uint8_t(std::lround(v * 255.0));
    }
    if (std::fwrite(buf.data(), 1, n, f.get()) != n)
      throw std::runtime_error("write failed: " + path);
  } else {
    std::vector<uint8_t> buf(2 * n);
    for (size_t i = 0; i < n; ++i) {
      const double v = std::clamp(img.data[i], 0.0, 1.0);
      const uint16_t q = uint16_t(std::lround(v * 65535.0));
      buf[2 * i] = uint8_t(q >> 8);
      buf[2 * i + 1] = uint8_t(q & 0xFF);
    }
    if (std::fwrite(buf.data(), 1, 2 * n, f.get()) != 2 * n)
      throw std::runtime_error("write failed: " + path);
  }
}

// --- PNG ---------------------------------------------------------------------

ImageGray load_png(std::FILE* f, const std::string& path) {
  png_byte header[8];
  if (std::fread(header, 1, 8, f) != 8 || png_sig_cmp(header, 0, 8))
    throw std::runtime_error("not a PNG file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to read PNG: " + path);
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  // Expand sub-byte gray to 8 bits; palette images expand to color and are
  // then rejected below.
  png_read_png(png, info, PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND,
               nullptr);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(
        "unsupported PNG: expected 8- or 16-bit grayscale, refusing to "
        "convert color input: " +
        path);
  }
  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  png_bytepp rows = png_get_rows(png, info);

  ImageGray img(w, h);
  if (depth == 16) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        img.at(r, c) = ((rows[r][2 * c] << 8) | rows[r][2 * c + 1]) / 65535.0;
  } else {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) img.at(r, c) = rows[r][c] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const ImageGray& img, const std::string& path, int bits) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write file: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to write PNG: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height),
               bits, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const int bpp = bits / 8;
  std::vector<png_byte> row(size_t(img.width) * bpp);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double v = std::clamp(img.at(r, c), 0.0, 1.0);
      if (bits == 8) {
        row[c] = png_byte(std::lround(v * 255.0));
      } else {
        const uint16_t q = uint16_t(std::lround(v * 65535.0));
        row[2 * c] = png_byte(q >> 8);
        row[2 * c + 1] = png_byte(q & 0xFF);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

// Catmull-Rom kernel (a = -0.5), support |t| < 2.
double cubic_weight(double t) {
  const double at = std::fabs(t);
  if (at <= 1.0) return ((1.5 * at - 2.5) * at) * at + 1.0;
  if (at < 2.0) return ((-0.5 * at + 2.5) * at - 4.0) * at + 2.0;
  return 0.0;
}

}  // namespace

double ImageGray::at_clamped(int r, int c) const {
  r = std::clamp(r, 0, height - 1);
  c = std::clamp(c, 0, width - 1);
  return at(r, c);
}

ImageGray load_grayscale(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("file not found: " + path);
  const std::string ext = lower_ext(path);
  if (ext == "png") return load_png(f.get(), path);
  if (ext == "pgm") return load_pgm(f.get(), path);
  throw std::runtime_error("unsupported image format (want .png or .pgm): " +
                           path);
}

void save_grayscale(const ImageGray& image, const std::string& path,
                    int bits) {
  if (image.width < 1 || image.height < 1 ||
      image.data.size() != image.pixel_count())
    throw std::invalid_argument("invalid image");
  if (bits != 8 && bits != 16)
    throw std::invalid_argument("bit depth must be 8 or 16");
  const std::string ext = lower_ext(path);
  if (ext == "png")
    save_png(image, path, bits);
  else if (ext == "pgm")
    save_pgm(image, path, bits);
  else
    throw std::runtime_error("unsupported image format (want .png or .pgm): " +
                             path);
}

ImageGray flip_horizontal(const ImageGray& image) {
  ImageGray out(image.width, image.height);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      out.at(r, c) = image.at(r, image.width - 1 - c);
  return out;
}

ImageGray rotate90(const ImageGray& image) {
  ImageGray out(image.height, image.width);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      out.at(c, image.height - 1 - r) = image.at(r, c);
  return out;
}

std::pair<ImageGray, ImageGray> normalize_pair(const ImageGray& a,
                                               const ImageGray& b) {
  double lo = a.data.empty() ? 0.0 : a.data[0];
  double hi = lo;
  for (const ImageGray* img : {&a, &b}) {
    for (double v : img->data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo))
    throw std::runtime_error(
        "normalize_pair: jointly constant image pair has no defined "
        "normalization");
  const double scale = 1.0 / (hi - lo);
  auto apply = [&](const ImageGray& img) {
    ImageGray out = img;
    for (double& v : out.data) v = (v - lo) * scale;
    return out;
  };
  return {apply(a), apply(b)};
}

PixelPairSet sample_pixel_pairs(const ImageGray& a, const ImageGray& b, int n,
                                uint64_t seed, const PixelPairSet* exclude) {
  if (!a.same_size(b))
    throw std::invalid_argument("sample_pixel_pairs: dimension mismatch");
  const size_t total = a.pixel_count();
  std::vector<uint8_t> excluded(total, 0);
  size_t n_excluded = 0;
  if (exclude) {
    for (const auto& rc : exclude->indices) {
      const size_t idx = size_t(rc[0]) * a.width + rc[1];
      if (!excluded[idx]) {
        excluded[idx] = 1;
        ++n_excluded;
      }
    }
  }
  if (n < 0 || size_t(n) > total - n_excluded)
    throw std::invalid_argument(
        "sample_pixel_pairs: requested more samples than available pixels");

  std::vector<uint32_t> pool;
  pool.reserve(total - n_excluded);
  for (size_t i = 0; i < total; ++i)
    if (!excluded[i]) pool.push_back(uint32_t(i));

  Rng rng(seed);
  PixelPairSet set;
  set.seed = seed;
  set.samples.reserve(n);
  set.indices.reserve(n);
  for (int i = 0; i < n; ++i) {
    const size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    const uint32_t idx = pool[i];
    const int r = int(idx / a.width);
    const int c = int(idx % a.width);
    set.samples.push_back({a.at(r, c), b.at(r, c)});
    set.indices.push_back({r, c});
  }
  return set;
}

double bicubic_sample(const ImageGray& image, double x, double y) {
  const int x0 = int(std::floor(x));
  const int y0 = int(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  double wx[4], wy[4];
  for (int j = -1; j <= 2; ++j) {
    wx[j + 1] = cubic_weight(fx - j);
    wy[j + 1] = cubic_weight(fy - j);
  }
  double acc = 0.0;
  for (int i = -1; i <= 2; ++i) {
    double row = 0.0;
    for (int j = -1; j <= 2; ++j)
      row += wx[j + 1] * image.at_clamped(y0 + i, x0 + j);
    acc += wy[i + 1] * row;
  }
  return acc;
}

ImageGray bicubic_resample(const ImageGray& image, double factor) {
  if (!(factor > 0.0))
    throw std::invalid_argument("bicubic_resample: factor must be positive");
  const long ow = std::lround(image.width * factor);
  const long oh = std::lround(image.height * factor);
  if (ow < 1 || oh < 1)
    throw std::invalid_argument("bicubic_resample: degenerate output size");
  ImageGray out{int(ow), int(oh)};
  const double inv = 1.0 / factor;
  for (int r = 0; r < out.height; ++r) {
    const double y = (r + 0.5) * inv - 0.5;
    for (int c = 0; c < out.width; ++c) {
      const double x = (c + 0.5) * inv - 0.5;
      out.at(r, c) = std::clamp(bicubic_sample(image, x, y), 0.0, 1.0);
    }
  }
  return out;
}

ImageGray display_normalize(const ImageGray& image) {
  const size_t n = image.pixel_count();
  if (n == 0) return image;
  std::vector<double> sorted(image.data);
  std::sort(sorted.begin(), sorted.end());
  const size_t m = std::max<size_t>(1, size_t(std::lround(0.01 * double(n))));
  const double lo = sorted[m - 1];
  const double hi = sorted[n - m];
  ImageGray out = image;
  if (!(hi > lo)) {
    for (double& v : out.data) v = 0.5;
    return out;
  }
  // divide rather than scale by a reciprocal so hi lands exactly on 1
  const double range = hi - lo;
  for (double& v : out.data) v = std::clamp((v - lo) / range, 0.0, 1.0);
  return out;
}

}  // namespace showthru

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gradinv/rng.hpp"
#include "gradinv/tensor.hpp"

namespace gradinv {

// A labelled image set. Images are [C,H,W] tensors in [0,1]; labels are
// class indices below `classes`.
struct Dataset {
  std::string name;
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::size_t size() const { return images.size(); }
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError(what + ": truncated header");
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// IDX image/label pair (the MNIST container format): big-endian u32 header,
// u8 payload. Pixels are scaled by 1/255 into [0,1].
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path, std::size_t limit) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path);
  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("cannot open " + labels_path);

  const std::uint32_t img_magic = detail::read_be_u32(imgs, images_path);
  if (img_magic != kIdxImageMagic) {
    std::ostringstream os;
    os << images_path << ": bad image magic 0x" << std::hex << img_magic;
    throw IoError(os.str());
  }
  const std::uint32_t n_images = detail::read_be_u32(imgs, images_path);
  const std::uint32_t rows = detail::read_be_u32(imgs, images_path);
  const std::uint32_t cols = detail::read_be_u32(imgs, images_path);

  const std::uint32_t lbl_magic = detail::read_be_u32(lbls, labels_path);
  if (lbl_magic != kIdxLabelMagic) {
    std::ostringstream os;
    os << labels_path << ": bad label magic 0x" << std::hex << lbl_magic;
    throw IoError(os.str());
  }
  const std::uint32_t n_labels = detail::read_be_u32(lbls, labels_path);
  if (n_labels != n_images) {
    throw IoError("image/label count mismatch: " + std::to_string(n_images) +
                  " vs " + std::to_string(n_labels));
  }

  Dataset ds;
  ds.name = "idx";
  ds.classes = 10;
  const std::size_t n = std::min<std::size_t>(limit, n_images);
  const std::size_t pixels = std::size_t(rows) * cols;
  std::vector<unsigned char> buf(pixels);
  for (std::size_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()),
                   static_cast<std::streamsize>(pixels))) {
      throw IoError(images_path + ": truncated image payload at image " +
                    std::to_string(i));
    }
    Tensor img({1, rows, cols});
    for (std::size_t p = 0; p < pixels; ++p) {
      img[p] = static_cast<double>(buf[p]) / 255.0;
    }
    ds.images.push_back(std::move(img));
    char lbl;
    if (!lbls.read(&lbl, 1)) {
      throw IoError(labels_path + ": truncated label payload at image " +
                    std::to_string(i));
    }
    const auto label = static_cast<std::size_t>(
        static_cast<unsigned char>(lbl));
    if (label > 9) {
      throw IoError(labels_path + ": label " + std::to_string(label) +
                    " out of range");
    }
    ds.labels.push_back(label);
  }
  return ds;
}

namespace detail {

// Whitespace-and-comment-aware token reader for PGM headers.
inline std::string pgm_token(std::istream& is, const std::string& path) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError(path + ": truncated PGM header");
  return tok;
}

inline std::size_t pgm_number(std::istream& is, const std::string& path,
                              const char* what) {
  const std::string tok = pgm_token(is, path);
  std::size_t value = 0;
  for (char ch : tok) {
    if (ch < '0' || ch > '9') {
      throw IoError(path + ": malformed PGM " + what + " '" + tok + "'");
    }
    value = value * 10 + static_cast<std::size_t>(ch - '0');
  }
  return value;
}

}  // namespace detail

// P5 (binary) or P2 (ascii) grayscale image, scaled to [0,1]. Maxval up to
// 65535 (two-byte big-endian samples in P5).
inline Tensor load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  const std::string magic = detail::pgm_token(is, path);
  if (magic != "P5" && magic != "P2") {
    throw IoError(path + ": not a PGM (magic '" + magic + "')");
  }
  const std::size_t w = detail::pgm_number(is, path, "width");
  const std::size_t h = detail::pgm_number(is, path, "height");
  const std::size_t maxval = detail::pgm_number(is, path, "maxval");
  if (w == 0 || h == 0) throw IoError(path + ": zero PGM dimensions");
  if (maxval == 0 || maxval > 65535) {
    throw IoError(path + ": PGM maxval " + std::to_string(maxval) +
                  " out of range");
  }
  Tensor img({1, h, w});
  const double inv = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (std::size_t i = 0; i < h * w; ++i) {
      const std::size_t v = detail::pgm_number(is, path, "pixel");
      if (v > maxval) {
        throw IoError(path + ": pixel value " + std::to_string(v) +
                      " exceeds maxval");
      }
      img[i] = static_cast<double>(v) * inv;
    }
  } else {
    const bool wide = maxval > 255;
    const std::size_t bytes = h * w * (wide ? 2 : 1);
    std::vector<unsigned char> buf(bytes);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(bytes))) {
      throw IoError(path + ": PGM payload shorter than width*height");
    }
    for (std::size_t i = 0; i < h * w; ++i) {
      const std::size_t v = wide
                                ? (std::size_t(buf[2 * i]) << 8) | buf[2 * i + 1]
                                : buf[i];
      img[i] = static_cast<double>(v) * inv;
    }
  }
  return img;
}

// Clamps to [0,1], quantizes to maxval 255 and writes binary P5. Multi-
// channel images are saved as the channel mean.
inline void save_pgm(const std::string& path, const Tensor& image) {
  std::size_t h = 0, w = 0;
  std::vector<double> gray;
  if (image.rank() == 2) {
    h = image.extent(0);
    w = image.extent(1);
    gray = image.data();
  } else if (image.rank() == 3) {
    const std::size_t c = image.extent(0);
    h = image.extent(1);
    w = image.extent(2);
    gray.assign(h * w, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < h * w; ++p) {
        gray[p] += image[ch * h * w + p];
      }
    }
    for (double& v : gray) v /= static_cast<double>(c);
  } else {
    throw ShapeError("save_pgm wants [H,W] or [C,H,W], got " +
                     shape_str(image.shape()));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  for (double v : gray) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    const long q = std::lround(clamped * 255.0);
    os.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
  if (!os) throw IoError("write failed for " + path);
}

// Synthetic image families standing in for dataset distribution shapes:
// flat noise, smooth mid-gray blobs, and mostly-binary stroke rasters.
enum class SynthKind { kUniformNoise, kGaussianBlobs, kBinaryStrokes };

inline const char* synth_name(SynthKind k) {
  switch (k) {
    case SynthKind::kUniformNoise: return "uniform_noise";
    case SynthKind::kGaussianBlobs: return "gaussian_blobs";
    case SynthKind::kBinaryStrokes: return "binary_strokes";
  }
  return "?";
}

namespace detail {

inline void draw_line(Tensor& img, std::size_t channel, std::size_t h,
                      std::size_t w, long x0, long y0, long x1, long y1) {
  // Bresenham; pixels set to exactly 1.
  long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    if (x0 >= 0 && y0 >= 0 && x0 < static_cast<long>(w) &&
        y0 < static_cast<long>(h)) {
      img[channel * h * w + static_cast<std::size_t>(y0) * w +
          static_cast<std::size_t>(x0)] = 1.0;
    }
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace detail

inline Dataset synth(SynthKind kind, const Shape& image_shape, std::size_t n,
                     std::size_t classes, Rng& rng) {
  if (n < 1) throw ConfigError("synth dataset needs n >= 1");
  if (image_shape.size() != 3) {
    throw ShapeError("synth image shape must be [C,H,W], got " +
                     shape_str(image_shape));
  }
  const std::size_t c = image_shape[0], h = image_shape[1], w = image_shape[2];
  Dataset ds;
  ds.name = synth_name(kind);
  ds.classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor img(image_shape);
    switch (kind) {
      case SynthKind::kUniformNoise: {
        for (double& v : img.data()) v = rng.uniform01();
        break;
      }
      case SynthKind::kGaussianBlobs: {
        // Sum of a few smooth bumps, clipped to [0,1].
        const std::size_t blobs = 2 + rng.index_below(3);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t b = 0; b < blobs; ++b) {
            const double cx = rng.uniform01() * static_cast<double>(w);
            const double cy = rng.uniform01() * static_cast<double>(h);
            const double sigma =
                (0.12 + 0.2 * rng.uniform01()) * static_cast<double>(h);
            const double amp = 0.4 + 0.6 * rng.uniform01();
            for (std::size_t y = 0; y < h; ++y) {
              for (std::size_t x = 0; x < w; ++x) {
                const double dx = (static_cast<double>(x) - cx) / sigma;
                const double dy = (static_cast<double>(y) - cy) / sigma;
                img[ch * h * w + y * w + x] +=
                    amp * std::exp(-0.5 * (dx * dx + dy * dy));
              }
            }
          }
        }
        for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
        break;
      }
      case SynthKind::kBinaryStrokes: {
        // 2-4 line segments on black; every pixel is exactly 0 or 1.
        const std::size_t strokes = 2 + rng.index_below(3);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t s = 0; s < strokes; ++s) {
            const long x0 = static_cast<long>(rng.index_below(w));
            const long y0 = static_cast<long>(rng.index_below(h));
            const long x1 = static_cast<long>(rng.index_below(w));
            const long y1 = static_cast<long>(rng.index_below(h));
            detail::draw_line(img, ch, h, w, x0, y0, x1, y1);
          }
        }
        break;
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(i % classes);
  }
  return ds;
}

}  // namespace gradinv

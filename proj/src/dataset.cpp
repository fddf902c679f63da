#include "treebp/dataset.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace treebp {

namespace {

constexpr std::size_t kCifarRecord = 3073;  // 1 label byte + 3*32*32 pixels
constexpr std::size_t kCifarPixels = 3072;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto len = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> buf(len);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("short read from " + path.string());
  return buf;
}

void append_cifar_records(const std::filesystem::path& file,
                          std::vector<LabeledImage>& out) {
  const auto bytes = read_file(file);
  if (bytes.size() % kCifarRecord != 0) {
    throw FormatError(file.string() + ": length " + std::to_string(bytes.size()) +
                      " is not a whole number of 3073-byte records");
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  out.reserve(out.size() + n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw FormatError(file.string() + ": record " + std::to_string(r) +
                        " has label byte " + std::to_string(rec[0]) + " > 9");
    }
    LabeledImage img;
    img.label = rec[0];
    img.pixels = TensorF({3, 32, 32});
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      img.pixels[p] = normalize_pixel(rec[1 + p]);
    }
    out.push_back(std::move(img));
  }
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

std::vector<LabeledImage> load_idx_pair(const std::filesystem::path& images,
                                        const std::filesystem::path& labels) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (ib.size() < 16 || read_be32(ib.data()) != 0x00000803u) {
    throw FormatError(images.string() + ": bad IDX image magic");
  }
  if (lb.size() < 8 || read_be32(lb.data()) != 0x00000801u) {
    throw FormatError(labels.string() + ": bad IDX label magic");
  }
  const std::uint32_t n = read_be32(ib.data() + 4);
  const std::uint32_t rows = read_be32(ib.data() + 8);
  const std::uint32_t cols = read_be32(ib.data() + 12);
  const std::uint32_t nl = read_be32(lb.data() + 4);
  if (n != nl) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(nl) + " labels");
  }
  const std::size_t need = 16 + std::size_t(n) * rows * cols;
  if (ib.size() < need) {
    throw FormatError(images.string() + ": header claims " + std::to_string(n) +
                      " images but payload holds fewer");
  }
  if (lb.size() < 8 + std::size_t(n)) {
    throw FormatError(labels.string() + ": header claims " + std::to_string(n) +
                      " labels but payload holds fewer");
  }

  std::vector<LabeledImage> out;
  out.reserve(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    const std::uint8_t label = lb[8 + r];
    if (label > 9) {
      throw FormatError(labels.string() + ": record " + std::to_string(r) +
                        " has label " + std::to_string(label) + " > 9");
    }
    LabeledImage img;
    img.label = label;
    img.pixels = TensorF({1, rows, cols});
    const std::uint8_t* px = ib.data() + 16 + std::size_t(r) * rows * cols;
    for (std::size_t p = 0; p < std::size_t(rows) * cols; ++p) {
      img.pixels[p] = normalize_pixel(px[p]);
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace

std::vector<LabeledImage> load_cifar10_batch(const std::filesystem::path& file) {
  std::vector<LabeledImage> out;
  append_cifar_records(file, out);
  return out;
}

Dataset load_cifar10(const std::filesystem::path& dir) {
  // Accept both the flattened layout and the archive's own subdirectory.
  std::filesystem::path base = dir;
  if (!std::filesystem::exists(base / "data_batch_1.bin") &&
      std::filesystem::exists(base / "cifar-10-batches-bin" / "data_batch_1.bin")) {
    base /= "cifar-10-batches-bin";
  }
  Dataset ds;
  for (int b = 1; b <= 5; ++b) {
    append_cifar_records(base / ("data_batch_" + std::to_string(b) + ".bin"), ds.train);
  }
  append_cifar_records(base / "test_batch.bin", ds.test);
  return ds;
}

Dataset load_mnist(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = load_idx_pair(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  ds.test = load_idx_pair(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  return ds;
}

LabeledImage augment(const LabeledImage& img, const AugmentPolicy& policy, Rng& rng) {
  if (policy.is_identity()) return img;

  const std::size_t c = img.pixels.extent(0);
  const std::size_t h = img.pixels.extent(1);
  const std::size_t w = img.pixels.extent(2);

  const bool flip = policy.hflip && rng.coin();
  int dx = 0, dy = 0;
  if (policy.max_shift > 0) {
    dx = static_cast<int>(rng.uniform_int(-policy.max_shift, policy.max_shift));
    dy = static_cast<int>(rng.uniform_int(-policy.max_shift, policy.max_shift));
  }

  LabeledImage out;
  out.label = img.label;
  out.pixels = TensorF({c, h, w});
  // out[y][x] = flipped(in)[y - dy][x - dx]; dx > 0 shifts content right,
  // dy > 0 shifts it down. Vacated pixels stay at 0.0.
  for (std::size_t ci = 0; ci < c; ++ci) {
    const float* in_ch = img.pixels.data() + ci * h * w;
    float* out_ch = out.pixels.data() + ci * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      const long sy = static_cast<long>(y) - dy;
      if (sy < 0 || sy >= static_cast<long>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const long sx = static_cast<long>(x) - dx;
        if (sx < 0 || sx >= static_cast<long>(w)) continue;
        const std::size_t src_x = flip ? (w - 1 - static_cast<std::size_t>(sx))
                                       : static_cast<std::size_t>(sx);
        out_ch[y * w + x] = in_ch[static_cast<std::size_t>(sy) * w + src_x];
      }
    }
  }
  return out;
}

}  // namespace treebp

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "treebp/rng.hpp"
#include "treebp/tensor.hpp"

namespace treebp {

// One normalized example: pixels in [-1, 1], shape [C][H][W].
struct LabeledImage {
  TensorF pixels;
  int label = 0;
};

struct Dataset {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
};

// byte/255 * 2 - 1, so 0 -> -1.0 and 255 -> 1.0 exactly.
inline float normalize_pixel(std::uint8_t byte) {
  return static_cast<float>(byte) / 255.0f * 2.0f - 1.0f;
}

// CIFAR-10 binary batches: data_batch_{1..5}.bin + test_batch.bin, each a
// sequence of 3073-byte records (label byte, then 3x1024 channel-major pixels).
Dataset load_cifar10(const std::filesystem::path& dir);

// MNIST IDX files: train-images-idx3-ubyte / train-labels-idx1-ubyte and the
// t10k pair. Big-endian headers, magic 0x803 (images) / 0x801 (labels).
Dataset load_mnist(const std::filesystem::path& dir);

// Loads a single CIFAR-10 batch file (any whole number of records).
std::vector<LabeledImage> load_cifar10_batch(const std::filesystem::path& file);

struct AugmentPolicy {
  int max_shift = 0;  // pixels per axis, uniform in [-max_shift, max_shift]
  bool hflip = false;

  bool is_identity() const { return max_shift == 0 && !hflip; }
};

// Horizontal flip with probability 1/2 when enabled, then an integer translate
// with vacated pixels filled with 0.0 (normalized mid-gray). Label unchanged.
LabeledImage augment(const LabeledImage& img, const AugmentPolicy& policy, Rng& rng);

// Deterministic per-(seed, epoch, example) augmentation stream.
inline Rng augment_rng(std::uint64_t master_seed, std::uint64_t epoch,
                       std::uint64_t example_index) {
  return Rng(derive_seed(master_seed, "augment", epoch, example_index));
}

}  // namespace treebp

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prflow/tensor.hpp"

namespace prflow {

/// Images with values in [0,1], stored as a {N, H, W, C} tensor.
struct ImageDataset {
  std::string name;
  std::string split;
  ImageShape shape;
  Tensor images;
  std::optional<std::vector<int>> labels;

  std::size_t count() const { return images.rank() == 0 ? 0 : images.extent(0); }
  /// N x D view, one flattened image per row.
  ConstMatrixMap matrix() const { return images.as_matrix(); }
  Matrix to_matrix() const { return images.as_matrix(); }

  /// The first `n` images (and labels).
  ImageDataset head(std::size_t n) const;
  void validate(int num_classes = 10) const;
};

ImageDataset make_dataset(std::string name, std::string split, ImageShape shape,
                          const Matrix& rows, std::optional<std::vector<int>> labels = {});

enum class IdxType : std::uint8_t { UnsignedByte = 0x08, Float32 = 0x0D, Float64 = 0x0E };

/// Parses IDX image files (magic 0x00000803 for bytes; 0x00000D03 and
/// 0x00000E03 for float/double images, which are read without rescaling)
/// and optional IDX label files (0x00000801). Byte pixels are divided by 255.
ImageDataset load_idx(const std::filesystem::path& images_path,
                      const std::optional<std::filesystem::path>& labels_path = std::nullopt);

/// Writes images as IDX. Byte output rounds value * 255 after clamping to [0,1].
void write_idx_images(const std::filesystem::path& path, const ImageDataset& dataset,
                      IdxType type = IdxType::Float64);
void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels);

enum class SyntheticKind { Constant, Ramp, Blocks };
SyntheticKind parse_synthetic_kind(const std::string& name);

/// Deterministic synthetic corpora: "constant" images, horizontal "ramp"
/// images x[i,j] = j / W, and "blocks": 2-4
/// random axis-aligned rectangles of constant intensity on a dark background.
ImageDataset generate_synthetic(SyntheticKind kind, std::size_t count, ImageShape shape,
                                std::uint64_t seed);

/// Per-pixel independent Bernoulli dropping with probability `missing_rate`.
struct MaskSpec {
  double missing_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mask streams keep train and test masks independent under one seed.
enum class MaskStream : std::uint64_t { Train = 0, Test = 1 };

/// Mask for one image: 1 = observed. Channels of a pixel share one draw, which
/// depends only on (seed, stream, sample index, pixel index).
Vector sample_mask(const ImageShape& shape, const MaskSpec& spec, std::size_t sample_index,
                   MaskStream stream = MaskStream::Train);
Matrix sample_masks(std::size_t count, const ImageShape& shape, const MaskSpec& spec,
                    MaskStream stream = MaskStream::Train);

/// Observation of a dataset under a mask: values are zero where missing.
struct MaskedDataset {
  ImageShape shape;
  Matrix observed;
  Matrix masks;

  std::size_t count() const { return static_cast<std::size_t>(observed.rows()); }
};

MaskedDataset apply_masks(const ImageDataset& dataset, const MaskSpec& spec, MaskStream stream);

/// Nearest-neighbour fill of every row (see shallow_init).
Matrix shallow_fill(const MaskedDataset& data);

}  // namespace prflow

#include "prflow/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "prflow/error.hpp"
#include "prflow/imputer.hpp"
#include "prflow/parallel.hpp"
#include "prflow/random.hpp"

namespace prflow {
namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw ParseError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

template <typename T>
T read_be(const unsigned char* p) {
  std::array<unsigned char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = p[sizeof(T) - 1 - i];
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

template <typename T>
void write_be(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> buf;
  std::memcpy(buf.data(), &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>(buf[sizeof(T) - 1 - i]));
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace

ImageDataset ImageDataset::head(std::size_t n) const {
  n = std::min(n, count());
  Matrix rows = matrix().topRows(static_cast<Eigen::Index>(n));
  std::optional<std::vector<int>> l;
  if (labels) l = std::vector<int>(labels->begin(), labels->begin() + static_cast<long>(n));
  return make_dataset(name, split, shape, rows, std::move(l));
}

void ImageDataset::validate(int num_classes) const {
  if (count() == 0) throw ContractError("dataset holds no images");
  if (images.size() != count() * shape.size()) throw ContractError("dataset tensor/shape mismatch");
  if (labels) {
    if (labels->size() != count()) throw ContractError("label count differs from image count");
    for (int l : *labels) {
      if (l < 0 || l >= num_classes) throw ContractError("label out of range");
    }
  }
}

ImageDataset make_dataset(std::string name, std::string split, ImageShape shape,
                          const Matrix& rows, std::optional<std::vector<int>> labels) {
  if (static_cast<std::size_t>(rows.cols()) != shape.size()) {
    throw ContractError("dataset rows do not match the image shape");
  }
  ImageDataset ds;
  ds.name = std::move(name);
  ds.split = std::move(split);
  ds.shape = shape;
  ds.images = Tensor({static_cast<std::size_t>(rows.rows()), shape.height, shape.width,
                      shape.channels},
                     std::vector<double>(rows.data(), rows.data() + rows.size()));
  ds.labels = std::move(labels);
  return ds;
}

ImageDataset load_idx(const std::filesystem::path& images_path,
                      const std::optional<std::filesystem::path>& labels_path) {
  const auto bytes = read_file(images_path);
  const std::uint32_t magic = read_be32(bytes, 0, images_path);
  const std::uint32_t type = (magic >> 8) & 0xFF;
  const std::uint32_t dims = magic & 0xFF;
  if ((magic >> 16) != 0 || dims != 3 ||
      (type != 0x08 && type != 0x0D && type != 0x0E)) {
    throw ParseError(images_path.string() + ": bad IDX image magic " + hex(magic) +
                     " (expected 0x00000803)");
  }
  const std::uint32_t n = read_be32(bytes, 4, images_path);
  const std::uint32_t rows = read_be32(bytes, 8, images_path);
  const std::uint32_t cols = read_be32(bytes, 12, images_path);
  if (n == 0 || rows == 0 || cols == 0) throw ParseError(images_path.string() + ": empty IDX");
  const std::size_t elem = type == 0x08 ? 1 : (type == 0x0D ? 4 : 8);
  const std::size_t count = std::size_t{n} * rows * cols;
  if (bytes.size() < 16 + count * elem) {
    throw ParseError(images_path.string() + ": truncated IDX payload (" +
                     std::to_string(bytes.size() - 16) + " of " + std::to_string(count * elem) +
                     " bytes)");
  }
  std::vector<double> values(count);
  const unsigned char* p = bytes.data() + 16;
  for (std::size_t i = 0; i < count; ++i) {
    if (type == 0x08) {
      values[i] = static_cast<double>(p[i]) / 255.0;
    } else if (type == 0x0D) {
      values[i] = static_cast<double>(read_be<float>(p + 4 * i));
    } else {
      values[i] = read_be<double>(p + 8 * i);
    }
  }

  ImageDataset ds;
  ds.name = images_path.parent_path().filename().string();
  ds.split = images_path.filename().string();
  ds.shape = ImageShape{rows, cols, 1};
  ds.images = Tensor({n, rows, cols, 1}, std::move(values));

  if (labels_path) {
    const auto lb = read_file(*labels_path);
    const std::uint32_t lmagic = read_be32(lb, 0, *labels_path);
    if (lmagic != 0x00000801) {
      throw ParseError(labels_path->string() + ": bad IDX label magic " + hex(lmagic) +
                       " (expected 0x00000801)");
    }
    const std::uint32_t ln = read_be32(lb, 4, *labels_path);
    if (ln != n) {
      throw ParseError("image/label count mismatch: " + std::to_string(n) + " images, " +
                       std::to_string(ln) + " labels");
    }
    if (lb.size() < 8 + std::size_t{ln}) throw ParseError(labels_path->string() + ": truncated labels");
    ds.labels = std::vector<int>(lb.begin() + 8, lb.begin() + 8 + ln);
  }
  return ds;
}

void write_idx_images(const std::filesystem::path& path, const ImageDataset& dataset,
                      IdxType type) {
  if (dataset.shape.channels != 1) throw ContractError("IDX writer supports single-channel images");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_be32(out, (static_cast<std::uint32_t>(type) << 8) | 3u);
  write_be32(out, static_cast<std::uint32_t>(dataset.count()));
  write_be32(out, static_cast<std::uint32_t>(dataset.shape.height));
  write_be32(out, static_cast<std::uint32_t>(dataset.shape.width));
  for (double v : dataset.images.values()) {
    switch (type) {
      case IdxType::UnsignedByte:
        out.put(static_cast<char>(
            static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
        break;
      case IdxType::Float32:
        write_be(out, static_cast<float>(v));
        break;
      case IdxType::Float64:
        write_be(out, v);
        break;
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_be32(out, 0x00000801);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.put(static_cast<char>(static_cast<unsigned char>(l)));
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "constant") return SyntheticKind::Constant;
  if (name == "ramp") return SyntheticKind::Ramp;
  if (name == "blocks") return SyntheticKind::Blocks;
  throw ContractError("unknown synthetic kind '" + name + "'");
}

ImageDataset generate_synthetic(SyntheticKind kind, std::size_t count, ImageShape shape,
                                std::uint64_t seed) {
  if (count == 0 || shape.size() == 0) throw ContractError("synthetic dataset must be non-empty");
  Rng rng(seed);
  Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(count),
                             static_cast<Eigen::Index>(shape.size()));
  std::vector<int> labels(count, 0);
  for (std::size_t n = 0; n < count; ++n) {
    auto row = rows.row(static_cast<Eigen::Index>(n));
    switch (kind) {
      case SyntheticKind::Constant: {
        row.setConstant(uniform01(rng));
        break;
      }
      case SyntheticKind::Ramp: {
        for (std::size_t r = 0; r < shape.height; ++r) {
          for (std::size_t q = 0; q < shape.width; ++q) {
            for (std::size_t c = 0; c < shape.channels; ++c) {
              row[static_cast<Eigen::Index>(shape.index(r, q, c))] =
                  static_cast<double>(q) / static_cast<double>(shape.width);
            }
          }
        }
        break;
      }
      case SyntheticKind::Blocks: {
        const std::size_t blocks = 2 + uniform_index(rng, 3);
        labels[n] = static_cast<int>(blocks - 2);
        for (std::size_t b = 0; b < blocks; ++b) {
          const std::size_t r0 = uniform_index(rng, shape.height);
          const std::size_t q0 = uniform_index(rng, shape.width);
          const std::size_t r1 = r0 + 1 + uniform_index(rng, shape.height - r0);
          const std::size_t q1 = q0 + 1 + uniform_index(rng, shape.width - q0);
          const double level = 0.25 + 0.75 * uniform01(rng);
          for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t q = q0; q < q1; ++q) {
              for (std::size_t c = 0; c < shape.channels; ++c) {
                row[static_cast<Eigen::Index>(shape.index(r, q, c))] = level;
              }
            }
          }
        }
        break;
      }
    }
  }
  const char* name = kind == SyntheticKind::Constant ? "synthetic-constant"
                     : kind == SyntheticKind::Ramp   ? "synthetic-ramp"
                                                     : "synthetic-blocks";
  return make_dataset(name, "synthetic", shape, rows, std::move(labels));
}

void MaskSpec::validate() const {
  if (!(missing_rate >= 0.0 && missing_rate <= 1.0)) {
    throw ContractError("missing rate must lie in [0, 1]");
  }
}

Vector sample_mask(const ImageShape& shape, const MaskSpec& spec, std::size_t sample_index,
                   MaskStream stream) {
  spec.validate();
  Vector mask(static_cast<Eigen::Index>(shape.size()));
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    const double u =
        counter_uniform(spec.seed, static_cast<std::uint64_t>(stream), sample_index, p);
    const double observed = u >= spec.missing_rate ? 1.0 : 0.0;
    for (std::size_t c = 0; c < shape.channels; ++c) {
      mask[static_cast<Eigen::Index>(p * shape.channels + c)] = observed;
    }
  }
  return mask;
}

Matrix sample_masks(std::size_t count, const ImageShape& shape, const MaskSpec& spec,
                    MaskStream stream) {
  Matrix masks(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(shape.size()));
  for (std::size_t n = 0; n < count; ++n) {
    masks.row(static_cast<Eigen::Index>(n)) = sample_mask(shape, spec, n, stream).transpose();
  }
  return masks;
}

MaskedDataset apply_masks(const ImageDataset& dataset, const MaskSpec& spec, MaskStream stream) {
  MaskedDataset out;
  out.shape = dataset.shape;
  out.masks = sample_masks(dataset.count(), dataset.shape, spec, stream);
  out.observed = dataset.matrix().cwiseProduct(out.masks);
  return out;
}

Matrix shallow_fill(const MaskedDataset& data) {
  Matrix filled(data.observed.rows(), data.observed.cols());
  parallel_for(data.count(), [&](std::size_t n) {
    const auto i = static_cast<Eigen::Index>(n);
    MaskedSample s{data.shape, data.observed.row(i).transpose(), data.masks.row(i).transpose(), {}};
    filled.row(i) = shallow_init(s).transpose();
  });
  return filled;
}

}  // namespace prflow

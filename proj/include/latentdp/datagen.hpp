// Copyright 2026 The latentdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Synthetic attribute images and the data plumbing around them: sensitive
// subset selection, distribution matching against a safe transfer set,
// attribute transfer, comparison baselines and the on-disk dataset format.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "latentdp/error.hpp"
#include "latentdp/latent_mechanism.hpp"
#include "latentdp/models.hpp"
#include "latentdp/rng.hpp"

namespace latentdp {

enum class Provenance { kRisky, kTransfer, kTransferredSensitive, kPerturbed };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kRisky: return "risky";
    case Provenance::kTransfer: return "transfer";
    case Provenance::kTransferredSensitive: return "transferred_sensitive";
    case Provenance::kPerturbed: return "perturbed";
  }
  return "unknown";
}

inline Provenance provenance_from_string(const std::string& s) {
  for (auto p : {Provenance::kRisky, Provenance::kTransfer, Provenance::kTransferredSensitive,
                 Provenance::kPerturbed}) {
    if (s == to_string(p)) return p;
  }
  throw InvalidArgument("unknown provenance '" + s + "'");
}

// Grayscale images with a binary label per attribute.
struct Dataset {
  int height = 0;
  int width = 0;
  std::vector<ImageTensor> images;
  Eigen::MatrixXi labels;  // num_images x num_attributes, entries 0/1
  std::vector<std::string> attribute_names;
  Provenance provenance = Provenance::kRisky;
  std::uint64_t seed = 0;
  // For derived subsets: index of each record in the dataset it came from.
  std::vector<std::size_t> origin;

  std::size_t size() const { return images.size(); }
  int num_attributes() const { return static_cast<int>(labels.cols()); }
  Eigen::Index pixel_count() const { return Eigen::Index{height} * width; }

  void validate() const {
    if (static_cast<std::size_t>(labels.rows()) != images.size()) {
      throw DimensionMismatch("Dataset: label rows do not match image count");
    }
    if (attribute_names.size() != static_cast<std::size_t>(labels.cols())) {
      throw DimensionMismatch("Dataset: attribute name count does not match label columns");
    }
    if (((labels.array() != 0) && (labels.array() != 1)).any()) {
      throw InvalidArgument("Dataset: labels must be 0 or 1");
    }
    for (const ImageTensor& img : images) {
      if (img.height != height || img.width != width) {
        throw DimensionMismatch("Dataset: image shape differs from dataset shape");
      }
    }
  }

  // Pixel design matrix, one row per image.
  Eigen::MatrixXd pixel_matrix() const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(images.size()), pixel_count());
    for (std::size_t i = 0; i < images.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = images[i].pixels.transpose();
    return x;
  }

  // Samples for a single-attribute classifier.
  SampleSet samples_for(int attribute) const {
    return {pixel_matrix(), labels.col(attribute).cast<double>()};
  }

  Dataset subset(const std::vector<std::size_t>& indices) const {
    Dataset out = *this;
    out.images.clear();
    out.origin = indices;
    out.labels.resize(static_cast<Eigen::Index>(indices.size()), labels.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      out.images.push_back(images.at(indices[i]));
      out.labels.row(static_cast<Eigen::Index>(i)) = labels.row(static_cast<Eigen::Index>(indices[i]));
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Rounds every pixel to the nearest float so the float32 file format
// round-trips exactly.
inline void quantize_to_f32(ImageTensor& image) {
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
    image.pixels[i] = static_cast<double>(static_cast<float>(image.pixels[i]));
  }
}

struct GeneratorSpec {
  int height = 16;
  int width = 16;
  int num_images = 5000;
  int num_attributes = 8;
  std::vector<double> attribute_balance;  // per attribute; empty means 0.5 each
  double noise_level = 0.0;
  std::uint64_t seed = 0;

  double balance(int k) const {
    if (attribute_balance.empty()) return 0.5;
    if (attribute_balance.size() == 1) return attribute_balance[0];
    return attribute_balance.at(static_cast<std::size_t>(k));
  }

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

enum class Primitive { kHorizontalBand, kVerticalBand, kDisk, kChecker, kBrightness };

inline const char* to_string(Primitive p) {
  switch (p) {
    case Primitive::kHorizontalBand: return "hband";
    case Primitive::kVerticalBand: return "vband";
    case Primitive::kDisk: return "disk";
    case Primitive::kChecker: return "checker";
    case Primitive::kBrightness: return "brightness";
  }
  return "unknown";
}

// Attribute k lives in cell (k / 2, k % 2) of a 4 x 2 grid of regions.
constexpr int kMaxAttributes = 8;

struct Region {
  int row0, row1, col0, col1;  // half-open
  bool contains(int r, int c) const { return r >= row0 && r < row1 && c >= col0 && c < col1; }
  int pixel_count() const { return (row1 - row0) * (col1 - col0); }
};

inline Region attribute_region(int attribute, int height, int width) {
  detail::require(attribute >= 0 && attribute < kMaxAttributes, "attribute_region: attribute out of range");
  const int r = attribute / 2, c = attribute % 2;
  return {r * height / 4, (r + 1) * height / 4, c * width / 2, (c + 1) * width / 2};
}

inline Primitive attribute_primitive(int attribute) { return static_cast<Primitive>(attribute % 5); }

inline std::vector<std::string> default_attribute_names(int count) {
  std::vector<std::string> names;
  for (int k = 0; k < count; ++k) {
    names.push_back("a" + std::to_string(k) + "_" + to_string(attribute_primitive(k)));
  }
  return names;
}

// Per-image background: global brightness plus a horizontal ramp.
struct ImageStyle {
  double brightness = 0.3;
  double ramp = 0.0;
};

constexpr double kPrimitiveAmplitude = 0.35;
constexpr double kBrightnessAmplitude = 0.2;

// Mask value in [0, 1] of a primitive at (r, c) relative to its region.
inline double primitive_mask(Primitive p, const Region& region, int r, int c) {
  const int h = region.row1 - region.row0, w = region.col1 - region.col0;
  const int lr = r - region.row0, lc = c - region.col0;
  switch (p) {
    case Primitive::kHorizontalBand: return (lr >= h / 4 && lr < h - h / 4) ? 1.0 : 0.0;
    case Primitive::kVerticalBand: return (lc >= w / 4 && lc < w - w / 4) ? 1.0 : 0.0;
    case Primitive::kDisk: {
      const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
      const double radius = std::min(h, w) / 2.0;
      const double dy = lr - cy, dx = lc - cx;
      return dy * dy + dx * dx <= radius * radius ? 1.0 : 0.0;
    }
    case Primitive::kChecker: return ((lr + lc) % 2 == 0) ? 1.0 : 0.0;
    case Primitive::kBrightness: return kBrightnessAmplitude / kPrimitiveAmplitude;
  }
  return 0.0;
}

// Noise-free image for a label vector.
inline ImageTensor render_attributes(int height, int width, const ImageStyle& style,
                                     const Eigen::VectorXi& attributes) {
  detail::require(attributes.size() <= kMaxAttributes, "render_attributes: too many attributes");
  ImageTensor img(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      img.at(r, c) = style.brightness + style.ramp * (static_cast<double>(c) / width - 0.5);
    }
  }
  for (int k = 0; k < attributes.size(); ++k) {
    if (attributes[k] == 0) continue;
    const Region region = attribute_region(k, height, width);
    const Primitive prim = attribute_primitive(k);
    for (int r = region.row0; r < region.row1; ++r) {
      for (int c = region.col0; c < region.col1; ++c) {
        img.at(r, c) += kPrimitiveAmplitude * primitive_mask(prim, region, r, c);
      }
    }
  }
  img.pixels = img.pixels.cwiseMax(0.0).cwiseMin(1.0);
  return img;
}

// Image i draws labels, style and pixel noise from stream i of the seed.
inline Dataset generate_dataset(const GeneratorSpec& spec) {
  detail::require(spec.height >= 4 && spec.width >= 2, "generate_dataset: images must be at least 4 x 2");
  detail::require(spec.num_images >= 0, "generate_dataset: num_images must be >= 0");
  detail::require(spec.num_attributes >= 1, "generate_dataset: num_attributes must be >= 1");
  if (spec.num_attributes > kMaxAttributes) {
    throw InvalidArgument("generate_dataset: " + std::to_string(spec.num_attributes) +
                          " attributes requested but only " + std::to_string(kMaxAttributes) +
                          " primitive positions exist");
  }
  detail::require(spec.noise_level >= 0.0, "generate_dataset: noise_level must be >= 0");
  for (int k = 0; k < spec.num_attributes; ++k) {
    detail::require(spec.balance(k) > 0.0 && spec.balance(k) < 1.0,
                    "generate_dataset: attribute balance must lie in (0, 1)");
  }
  Dataset data;
  data.height = spec.height;
  data.width = spec.width;
  data.seed = spec.seed;
  data.provenance = Provenance::kRisky;
  data.attribute_names = default_attribute_names(spec.num_attributes);
  data.labels.resize(spec.num_images, spec.num_attributes);
  data.images.reserve(static_cast<std::size_t>(spec.num_images));
  for (int i = 0; i < spec.num_images; ++i) {
    CounterRng rng(spec.seed, static_cast<std::uint64_t>(i));
    Eigen::VectorXi attrs(spec.num_attributes);
    for (int k = 0; k < spec.num_attributes; ++k) attrs[k] = rng.uniform() < spec.balance(k) ? 1 : 0;
    ImageStyle style{0.25 + 0.1 * rng.uniform(), 0.1 * (2.0 * rng.uniform() - 1.0)};
    ImageTensor img = render_attributes(spec.height, spec.width, style, attrs);
    if (spec.noise_level > 0.0) {
      for (Eigen::Index p = 0; p < img.pixels.size(); ++p) {
        img.pixels[p] = std::clamp(img.pixels[p] + spec.noise_level * rng.normal(), 0.0, 1.0);
      }
    }
    quantize_to_f32(img);
    data.labels.row(i) = attrs.transpose();
    data.images.push_back(std::move(img));
  }
  return data;
}

// Resource specification: positives of the target attribute, ceil(fraction * n)
// of them (all positives if fewer), sampled without replacement and returned
// in ascending order.
inline std::vector<std::size_t> select_sensitive_subset(const Dataset& data, int target_attribute,
                                                        double fraction, std::uint64_t seed) {
  if (target_attribute < 0 || target_attribute >= data.num_attributes()) {
    throw InvalidArgument("select_sensitive_subset: target attribute out of range");
  }
  detail::require(fraction > 0.0 && fraction <= 1.0, "select_sensitive_subset: fraction must lie in (0, 1]");
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels(static_cast<Eigen::Index>(i), target_attribute) == 1) positives.push_back(i);
  }
  if (positives.empty()) throw InvalidArgument("select_sensitive_subset: no positive records for target attribute");
  const auto wanted = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(data.size()) - 1e-9));
  const std::size_t count = std::clamp<std::size_t>(wanted, 1, positives.size());
  CounterRng rng(seed, 0x5E1EC7);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(positives.size() - i);
    std::swap(positives[i], positives[j]);
  }
  positives.resize(count);
  std::sort(positives.begin(), positives.end());
  return positives;
}

struct MatchResult {
  // pairing[i]: transfer index matched to sensitive record i.
  std::vector<std::optional<std::size_t>> pairing;
  std::vector<std::size_t> unmatched;  // positions i with no candidate

  std::size_t matched_count() const { return pairing.size() - unmatched.size(); }

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

inline bool same_non_target_labels(const Dataset& a, std::size_t ia, const Dataset& b, std::size_t ib,
                                   int target) {
  for (int k = 0; k < a.num_attributes(); ++k) {
    if (k == target) continue;
    if (a.labels(static_cast<Eigen::Index>(ia), k) != b.labels(static_cast<Eigen::Index>(ib), k)) return false;
  }
  return true;
}

// Nearest transfer record in embedding space among those whose non-target
// labels equal the sensitive record's; ties go to the lowest index.
inline MatchResult distribution_match(const Dataset& transfer, const Dataset& source,
                                      const std::vector<std::size_t>& sensitive, const Model& embedder,
                                      int target_attribute) {
  detail::require(transfer.size() > 0, "distribution_match: transfer set is empty");
  if (transfer.num_attributes() != source.num_attributes()) {
    throw DimensionMismatch("distribution_match: attribute counts differ");
  }
  if (transfer.pixel_count() != source.pixel_count()) {
    throw DimensionMismatch("distribution_match: image sizes differ");
  }
  std::vector<Eigen::VectorXd> transfer_embedding;
  transfer_embedding.reserve(transfer.size());
  for (const ImageTensor& img : transfer.images) transfer_embedding.push_back(encode(embedder, img));

  MatchResult result;
  result.pairing.resize(sensitive.size());
  for (std::size_t i = 0; i < sensitive.size(); ++i) {
    const std::size_t s = sensitive[i];
    const Eigen::VectorXd e = encode(embedder, source.images.at(s));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < transfer.size(); ++t) {
      if (!same_non_target_labels(source, s, transfer, t, target_attribute)) continue;
      const double dist = (transfer_embedding[t] - e).squaredNorm();
      if (dist < best) {
        best = dist;
        result.pairing[i] = t;
      }
    }
    if (!result.pairing[i]) result.unmatched.push_back(i);
  }
  return result;
}

enum class TransferMode { kSwapRegion, kLatentDp };

inline const char* to_string(TransferMode m) { return m == TransferMode::kSwapRegion ? "swap_region" : "latent_dp"; }

inline TransferMode transfer_mode_from_string(const std::string& s) {
  if (s == "swap_region") return TransferMode::kSwapRegion;
  if (s == "latent_dp") return TransferMode::kLatentDp;
  throw InvalidArgument("unknown transfer mode '" + s + "'");
}

// Mechanism settings for TransferMode::kLatentDp.
struct LatentDpTransfer {
  Model autoencoder;
  WeightVector weights;
  OuParams params;
  std::uint64_t seed = 0;
  PerturbOptions options;
};

// Copies the target attribute's region of `safe` into `sensitive`.
inline ImageTensor swap_region(const ImageTensor& sensitive, const ImageTensor& safe, int target_attribute) {
  if (sensitive.height != safe.height || sensitive.width != safe.width) {
    throw DimensionMismatch("swap_region: image shapes differ");
  }
  const Region region = attribute_region(target_attribute, sensitive.height, sensitive.width);
  ImageTensor out = sensitive;
  for (int r = region.row0; r < region.row1; ++r) {
    for (int c = region.col0; c < region.col1; ++c) out.at(r, c) = safe.at(r, c);
  }
  return out;
}

// One output record per matched sensitive record, in sensitive order. The
// target label becomes the safe record's label; others are kept. origin[i]
// is the record's index in `source`.
inline Dataset attribute_transfer(const Dataset& source, const std::vector<std::size_t>& sensitive,
                                  const Dataset& transfer, const MatchResult& match, int target_attribute,
                                  TransferMode mode, const std::optional<LatentDpTransfer>& mechanism = std::nullopt) {
  if (match.pairing.size() != sensitive.size()) {
    throw InvalidArgument("attribute_transfer: pairing does not cover the sensitive subset");
  }
  if (target_attribute < 0 || target_attribute >= source.num_attributes()) {
    throw InvalidArgument("attribute_transfer: target attribute out of range");
  }
  if (mode == TransferMode::kLatentDp && !mechanism) {
    throw InvalidArgument("attribute_transfer: latent_dp mode requires a mechanism configuration");
  }
  Dataset out;
  out.height = source.height;
  out.width = source.width;
  out.attribute_names = source.attribute_names;
  out.provenance = Provenance::kTransferredSensitive;
  out.seed = source.seed;
  std::vector<Eigen::VectorXi> rows;
  for (std::size_t i = 0; i < sensitive.size(); ++i) {
    if (!match.pairing[i]) continue;
    const std::size_t s = sensitive[i];
    const std::size_t t = *match.pairing[i];
    ImageTensor img;
    if (mode == TransferMode::kSwapRegion) {
      img = swap_region(source.images.at(s), transfer.images.at(t), target_attribute);
    } else {
      img = diffusion_dp_perturb(source.images.at(s), mechanism->autoencoder, mechanism->weights,
                                 mechanism->params, derive_seed(mechanism->seed, "latent_dp_transfer", s),
                                 mechanism->options)
                .image;
    }
    quantize_to_f32(img);
    Eigen::VectorXi labels = source.labels.row(static_cast<Eigen::Index>(s)).transpose();
    labels[target_attribute] = transfer.labels(static_cast<Eigen::Index>(t), target_attribute);
    rows.push_back(labels);
    out.images.push_back(std::move(img));
    out.origin.push_back(s);
  }
  out.labels.resize(static_cast<Eigen::Index>(rows.size()), source.num_attributes());
  for (std::size_t i = 0; i < rows.size(); ++i) out.labels.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

enum class BaselineMethod { kMosaic, kRandomCentralRemoval };

inline const char* to_string(BaselineMethod m) {
  return m == BaselineMethod::kMosaic ? "mosaic" : "random_central_removal";
}

inline BaselineMethod baseline_method_from_string(const std::string& s) {
  if (s == "mosaic") return BaselineMethod::kMosaic;
  if (s == "random_central_removal") return BaselineMethod::kRandomCentralRemoval;
  throw InvalidArgument("unknown baseline method '" + s + "'");
}

struct BaselineConfig {
  int block = 4;          // mosaic block edge
  int window_height = 7;  // removal window
  int window_width = 7;
  std::uint64_t seed = 0;

  friend bool operator==(const BaselineConfig&, const BaselineConfig&) = default;
};

inline ImageTensor mosaic(const ImageTensor& image, int block) {
  detail::require(block >= 1, "mosaic: block must be >= 1");
  ImageTensor out = image;
  for (int r0 = 0; r0 < image.height; r0 += block) {
    for (int c0 = 0; c0 < image.width; c0 += block) {
      const int r1 = std::min(image.height, r0 + block), c1 = std::min(image.width, c0 + block);
      double sum = 0.0;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) sum += image.at(r, c);
      }
      const double mean = sum / ((r1 - r0) * (c1 - c0));
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) out.at(r, c) = mean;
      }
    }
  }
  return out;
}

inline Dataset apply_baseline(const Dataset& data, BaselineMethod method, const BaselineConfig& config) {
  if (method == BaselineMethod::kRandomCentralRemoval) {
    detail::require(config.window_height >= 0 && config.window_width >= 0,
                    "apply_baseline: window must be non-negative");
    if (config.window_height > data.height || config.window_width > data.width) {
      throw InvalidArgument("apply_baseline: removal window larger than image");
    }
  }
  Dataset out = data;
  out.provenance = Provenance::kPerturbed;
  for (std::size_t i = 0; i < out.images.size(); ++i) {
    ImageTensor& img = out.images[i];
    if (method == BaselineMethod::kMosaic) {
      img = mosaic(img, config.block);
    } else {
      CounterRng rng(config.seed, i);
      const auto top = static_cast<int>(rng.below(static_cast<std::uint64_t>(data.height - config.window_height) + 1));
      const auto left = static_cast<int>(rng.below(static_cast<std::uint64_t>(data.width - config.window_width) + 1));
      for (int r = top; r < top + config.window_height; ++r) {
        for (int c = left; c < left + config.window_width; ++c) img.at(r, c) = 0.0;
      }
    }
    quantize_to_f32(img);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory: images.f32 (little-endian float32, image-major,
// row-major pixels), labels.csv (header of attribute names, rows of 0/1)
// and manifest.json (dimensions, seed, provenance, origin).

inline void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  data.validate();
  std::filesystem::create_directories(dir);
  std::string blob;
  blob.reserve(data.size() * static_cast<std::size_t>(data.pixel_count()) * 4);
  for (const ImageTensor& img : data.images) {
    for (Eigen::Index p = 0; p < img.pixels.size(); ++p) detail::put_le<float>(blob, static_cast<float>(img.pixels[p]));
  }
  detail::write_file((dir / "images.f32").string(), blob);

  std::ostringstream csv;
  for (std::size_t k = 0; k < data.attribute_names.size(); ++k) {
    csv << (k ? "," : "") << data.attribute_names[k];
  }
  csv << "\n";
  for (Eigen::Index i = 0; i < data.labels.rows(); ++i) {
    for (Eigen::Index k = 0; k < data.labels.cols(); ++k) csv << (k ? "," : "") << data.labels(i, k);
    csv << "\n";
  }
  detail::write_file((dir / "labels.csv").string(), csv.str());

  nlohmann::ordered_json manifest;
  manifest["height"] = data.height;
  manifest["width"] = data.width;
  manifest["num_images"] = data.size();
  manifest["num_attributes"] = data.num_attributes();
  manifest["seed"] = data.seed;
  manifest["provenance"] = to_string(data.provenance);
  manifest["origin"] = data.origin;
  detail::write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFound("dataset directory not found: " + dir.string());
  Dataset data;
  nlohmann::json manifest;
  std::size_t n = 0;
  int k = 0;
  try {
    manifest = nlohmann::json::parse(detail::read_file((dir / "manifest.json").string()));
    data.height = manifest.at("height").get<int>();
    data.width = manifest.at("width").get<int>();
    data.seed = manifest.at("seed").get<std::uint64_t>();
    data.provenance = provenance_from_string(manifest.at("provenance").get<std::string>());
    data.origin = manifest.at("origin").get<std::vector<std::size_t>>();
    n = manifest.at("num_images").get<std::size_t>();
    k = manifest.at("num_attributes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptData("dataset manifest: " + std::string(e.what()));
  }

  const std::string blob = detail::read_file((dir / "images.f32").string());
  const auto pixels = static_cast<std::size_t>(data.height) * static_cast<std::size_t>(data.width);
  if (blob.size() != n * pixels * 4) throw CorruptData("images.f32 size does not match manifest");
  std::size_t off = 0;
  data.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ImageTensor img(data.height, data.width);
    for (std::size_t p = 0; p < pixels; ++p) img.pixels[static_cast<Eigen::Index>(p)] = detail::get_le<float>(blob, off);
    data.images.push_back(std::move(img));
  }

  std::istringstream csv(detail::read_file((dir / "labels.csv").string()));
  std::string line;
  if (!std::getline(csv, line)) throw CorruptData("labels.csv: missing header");
  {
    std::istringstream header(line);
    std::string name;
    while (std::getline(header, name, ',')) data.attribute_names.push_back(name);
  }
  if (static_cast<int>(data.attribute_names.size()) != k) throw CorruptData("labels.csv: header width mismatch");
  data.labels.resize(static_cast<Eigen::Index>(n), k);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(csv, line)) throw CorruptData("labels.csv: missing rows");
    std::istringstream row(line);
    std::string cell;
    for (int j = 0; j < k; ++j) {
      if (!std::getline(row, cell, ',') || (cell != "0" && cell != "1")) {
        throw CorruptData("labels.csv: malformed row " + std::to_string(i + 1));
      }
      data.labels(static_cast<Eigen::Index>(i), j) = cell == "1" ? 1 : 0;
    }
  }
  return data;
}

}  // namespace latentdp

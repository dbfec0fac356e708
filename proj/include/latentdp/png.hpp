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

#pragma once

// Minimal PNG writer for 8-bit grayscale images (pixel = round(255 v)).
// Also a reader for the same subset, used to check the writer.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include "latentdp/error.hpp"
#include "latentdp/models.hpp"

namespace latentdp {

namespace detail {

inline void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

inline std::uint32_t get_be32(const std::string& in, std::size_t off) {
  if (off + 4 > in.size()) throw CorruptData("png: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(in[off + static_cast<std::size_t>(i)]);
  return v;
}

inline void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, static_cast<std::uint32_t>(
                    crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

inline constexpr char kPngSignature[] = "\x89PNG\r\n\x1a\n";

}  // namespace detail

inline std::uint8_t to_gray8(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

inline std::string encode_png(const ImageTensor& image) {
  detail::require(image.height > 0 && image.width > 0, "encode_png: empty image");
  std::string raw;
  raw.reserve(static_cast<std::size_t>(image.height) * static_cast<std::size_t>(image.width + 1));
  for (int r = 0; r < image.height; ++r) {
    raw.push_back(0);  // filter: none
    for (int c = 0; c < image.width; ++c) raw.push_back(static_cast<char>(to_gray8(image.at(r, c))));
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &size, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK) {
    throw NumericalError("encode_png: compression failed");
  }
  packed.resize(size);

  std::string out(detail::kPngSignature, 8);
  std::string ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(image.width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // depth 8, gray, deflate, no filter set, no interlace
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", packed);
  detail::put_chunk(out, "IEND", "");
  return out;
}

struct GrayImage8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Reads 8-bit grayscale, non-interlaced PNGs with filter type 0 rows.
inline GrayImage8 decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, std::string(detail::kPngSignature, 8)) != 0) {
    throw CorruptData("png: bad signature");
  }
  GrayImage8 img;
  std::string idat;
  std::size_t off = 8;
  bool ended = false;
  while (!ended) {
    const std::uint32_t len = detail::get_be32(bytes, off);
    if (off + 12 + len > bytes.size()) throw CorruptData("png: truncated chunk");
    const std::string type = bytes.substr(off + 4, 4);
    const std::string data = bytes.substr(off + 8, len);
    const std::string body = bytes.substr(off + 4, 4 + len);
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    if (crc != detail::get_be32(bytes, off + 8 + len)) throw CorruptData("png: CRC mismatch in " + type);
    if (type == "IHDR") {
      img.width = static_cast<int>(detail::get_be32(data, 0));
      img.height = static_cast<int>(detail::get_be32(data, 4));
      if (data.size() != 13 || data[8] != 8 || data[9] != 0 || data[12] != 0) {
        throw CorruptData("png: only 8-bit grayscale non-interlaced images are supported");
      }
    } else if (type == "IDAT") {
      idat += data;
    } else if (type == "IEND") {
      ended = true;
    }
    off += 12 + len;
  }
  const std::size_t stride = static_cast<std::size_t>(img.width) + 1;
  std::string raw(stride * static_cast<std::size_t>(img.height), '\0');
  uLongf size = static_cast<uLongf>(raw.size());
  if (uncompress(reinterpret_cast<Bytef*>(raw.data()), &size, reinterpret_cast<const Bytef*>(idat.data()),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      size != raw.size()) {
    throw CorruptData("png: bad image data");
  }
  for (int r = 0; r < img.height; ++r) {
    if (raw[static_cast<std::size_t>(r) * stride] != 0) throw CorruptData("png: unsupported row filter");
    for (int c = 0; c < img.width; ++c) {
      img.pixels.push_back(static_cast<std::uint8_t>(raw[static_cast<std::size_t>(r) * stride + 1 + static_cast<std::size_t>(c)]));
    }
  }
  return img;
}

}  // namespace latentdp

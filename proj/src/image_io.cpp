#include "octaseg/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace octaseg {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  if (!std::filesystem::exists(path))
    raise(ErrorCode::FileMissing, path);
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::string& path, const std::vector<uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) raise(ErrorCode::IoFailure, "short write to " + path);
}

struct RawGray {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bytes;  // row-major, one byte per pixel
};

// ---------------------------------------------------------------- PGM (P5)

bool looks_like_pgm(const std::vector<uint8_t>& d) {
  return d.size() >= 2 && d[0] == 'P' && d[1] == '5';
}

// Reads one whitespace-delimited unsigned integer, skipping '#' comments.
int pgm_next_int(const std::vector<uint8_t>& d, size_t& pos, const std::string& path) {
  while (pos < d.size()) {
    uint8_t c = d[pos];
    if (c == '#') {
      while (pos < d.size() && d[pos] != '\n') ++pos;
    } else if (std::isspace(c)) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= d.size() || !std::isdigit(d[pos]))
    raise(ErrorCode::CorruptHeader, "bad PGM header in " + path);
  long v = 0;
  while (pos < d.size() && std::isdigit(d[pos])) {
    v = v * 10 + (d[pos] - '0');
    if (v > 1 << 30) raise(ErrorCode::CorruptHeader, "absurd PGM header value in " + path);
    ++pos;
  }
  return static_cast<int>(v);
}

RawGray decode_pgm(const std::vector<uint8_t>& d, const std::string& path) {
  size_t pos = 2;
  RawGray out;
  out.width = pgm_next_int(d, pos, path);
  out.height = pgm_next_int(d, pos, path);
  int maxval = pgm_next_int(d, pos, path);
  if (out.width <= 0 || out.height <= 0)
    raise(ErrorCode::CorruptHeader, "non-positive PGM dimensions in " + path);
  if (maxval != 255)
    raise(ErrorCode::UnsupportedFormat,
          "PGM maxval " + std::to_string(maxval) + " in " + path + ", only 8-bit supported");
  if (pos >= d.size() || !std::isspace(d[pos]))
    raise(ErrorCode::CorruptHeader, "missing separator after PGM header in " + path);
  ++pos;  // exactly one whitespace byte before the raster
  size_t need = static_cast<size_t>(out.width) * out.height;
  if (d.size() - pos < need)
    raise(ErrorCode::TruncatedFile, "PGM raster short in " + path);
  out.bytes.assign(d.begin() + static_cast<long>(pos),
                   d.begin() + static_cast<long>(pos + need));
  return out;
}

std::vector<uint8_t> encode_pgm(const RawGray& img) {
  std::string header = "P5\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.bytes.begin(), img.bytes.end());
  return out;
}

// ---------------------------------------------------------------- PNG
// Minimal 8-bit grayscale PNG codec on top of zlib. Decoder handles the
// five standard row filters; encoder always emits filter 0.

const uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

bool looks_like_png(const std::vector<uint8_t>& d) {
  return d.size() >= 8 && std::memcmp(d.data(), kPngSig, 8) == 0;
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) |
         uint32_t(p[3]);
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

RawGray decode_png(const std::vector<uint8_t>& d, const std::string& path) {
  size_t pos = 8;
  RawGray out;
  int bit_depth = 0, color_type = -1, interlace = -1;
  std::vector<uint8_t> idat;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 8 <= d.size() && !saw_iend) {
    uint32_t len = be32(&d[pos]);
    if (pos + 12 + len > d.size())
      raise(ErrorCode::TruncatedFile, "PNG chunk overruns file in " + path);
    const uint8_t* type = &d[pos + 4];
    const uint8_t* body = &d[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) raise(ErrorCode::CorruptHeader, "bad IHDR length in " + path);
      out.width = static_cast<int>(be32(body));
      out.height = static_cast<int>(be32(body + 4));
      bit_depth = body[8];
      color_type = body[9];
      interlace = body[12];
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), body, body + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr) raise(ErrorCode::CorruptHeader, "PNG without IHDR in " + path);
  if (!saw_iend) raise(ErrorCode::TruncatedFile, "PNG without IEND in " + path);
  if (out.width <= 0 || out.height <= 0)
    raise(ErrorCode::CorruptHeader, "non-positive PNG dimensions in " + path);
  if (color_type != 0)
    raise(ErrorCode::UnsupportedFormat,
          "unsupported channel count (PNG color type " + std::to_string(color_type) +
              ") in " + path);
  if (bit_depth != 8)
    raise(ErrorCode::UnsupportedFormat,
          "unsupported bit depth " + std::to_string(bit_depth) + " in " + path);
  if (interlace != 0)
    raise(ErrorCode::UnsupportedFormat, "interlaced PNG not supported: " + path);

  size_t h = static_cast<size_t>(out.height), w = static_cast<size_t>(out.width);
  std::vector<uint8_t> raw(h * (w + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || raw_len != raw.size())
    raise(ErrorCode::TruncatedFile, "PNG image data corrupt in " + path);

  out.bytes.resize(h * w);
  std::vector<uint8_t> prev(w, 0);
  for (size_t y = 0; y < h; ++y) {
    uint8_t filter = raw[y * (w + 1)];
    const uint8_t* src = &raw[y * (w + 1) + 1];
    uint8_t* dst = &out.bytes[y * w];
    for (size_t x = 0; x < w; ++x) {
      int a = x > 0 ? dst[x - 1] : 0;   // left
      int b = prev[x];                  // up
      int c = x > 0 ? prev[x - 1] : 0;  // up-left
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default:
          raise(ErrorCode::UnsupportedFormat, "unknown PNG row filter in " + path);
      }
      dst[x] = static_cast<uint8_t>(v & 0xFF);
    }
    std::memcpy(prev.data(), dst, w);
  }
  return out;
}

void append_chunk(std::vector<uint8_t>& out, const char* type,
                  const std::vector<uint8_t>& body) {
  put_be32(out, static_cast<uint32_t>(body.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + body.size()));
  put_be32(out, static_cast<uint32_t>(crc));
}

std::vector<uint8_t> encode_png(const RawGray& img) {
  std::vector<uint8_t> out(kPngSig, kPngSig + 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(img.width));
  put_be32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // color type: grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);

  size_t w = static_cast<size_t>(img.width);
  std::vector<uint8_t> raw(static_cast<size_t>(img.height) * (w + 1));
  for (size_t y = 0; y < static_cast<size_t>(img.height); ++y) {
    raw[y * (w + 1)] = 0;  // filter: none
    std::memcpy(&raw[y * (w + 1) + 1], &img.bytes[y * w], w);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> idat(bound);
  int zrc = compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6);
  if (zrc != Z_OK) raise(ErrorCode::IoFailure, "PNG compression failed");
  idat.resize(bound);
  append_chunk(out, "IDAT", idat);
  append_chunk(out, "IEND", {});
  return out;
}

// ---------------------------------------------------------------- dispatch

RawGray load_raw(const std::string& path) {
  std::vector<uint8_t> data = read_file(path);
  if (looks_like_png(data)) return decode_png(data, path);
  if (looks_like_pgm(data)) return decode_pgm(data, path);
  raise(ErrorCode::UnsupportedFormat, "not a PGM(P5) or PNG file: " + path);
}

void save_raw(const RawGray& img, const std::string& path) {
  bool png = path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0;
  write_file(path, png ? encode_png(img) : encode_pgm(img));
}

}  // namespace

GrayImage load_gray(const std::string& path) {
  RawGray raw = load_raw(path);
  GrayImage img(raw.height, raw.width);
  for (size_t i = 0; i < raw.bytes.size(); ++i)
    img.values[i] = raw.bytes[i] / 255.0;
  return img;
}

BinaryMask load_mask(const std::string& path) {
  RawGray raw = load_raw(path);
  BinaryMask mask(raw.height, raw.width);
  for (size_t i = 0; i < raw.bytes.size(); ++i)
    mask.bits[i] = raw.bytes[i] > 127 ? 1 : 0;
  return mask;
}

void save_gray(const GrayImage& img, const std::string& path) {
  RawGray raw;
  raw.height = img.height;
  raw.width = img.width;
  raw.bytes.resize(img.pixel_count());
  for (size_t i = 0; i < img.values.size(); ++i) {
    double v = std::floor(img.values[i] * 255.0 + 0.5);  // round half up
    if (v < 0) v = 0;
    if (v > 255) v = 255;
    raw.bytes[i] = static_cast<uint8_t>(v);
  }
  save_raw(raw, path);
}

void save_mask(const BinaryMask& mask, const std::string& path) {
  RawGray raw;
  raw.height = mask.height;
  raw.width = mask.width;
  raw.bytes.resize(mask.pixel_count());
  for (size_t i = 0; i < mask.bits.size(); ++i)
    raw.bytes[i] = mask.bits[i] ? 255 : 0;
  save_raw(raw, path);
}

}  // namespace octaseg

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "shapeiq/geometry.hpp"

namespace shapeiq {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, crc);
}

}  // namespace

void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& rgb) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3)
    throw std::invalid_argument("write_png_rgb8: buffer size mismatch");

  // Filter byte 0 at the start of every scanline.
  std::vector<uint8_t> raw(static_cast<size_t>(height) * (1 + width * 3));
  for (int y = 0; y < height; ++y) {
    uint8_t* row = raw.data() + static_cast<size_t>(y) * (1 + width * 3);
    row[0] = 0;
    std::memcpy(row + 1, rgb.data() + static_cast<size_t>(y) * width * 3,
                static_cast<size_t>(width) * 3);
  }
  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw std::runtime_error("write_png_rgb8: deflate failed");
  comp.resize(comp_cap);

  std::vector<uint8_t> out;
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), sig, sig + 8);
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(width));
  put_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});

  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_png_rgb8: cannot open " + path);
  size_t written = std::fwrite(out.data(), 1, out.size(), f);
  std::fclose(f);
  if (written != out.size())
    throw std::runtime_error("write_png_rgb8: short write to " + path);
}

void write_png(const std::string& path, const Canvas& canvas) {
  std::vector<uint8_t> rgb(kCanvasValues);
  for (int i = 0; i < kCanvasValues; ++i)
    rgb[i] = static_cast<uint8_t>(std::lround(canvas.px[i] * 255.f));
  write_png_rgb8(path, kCanvasSize, kCanvasSize, rgb);
}

}  // namespace shapeiq

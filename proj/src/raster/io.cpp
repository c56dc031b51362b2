#include "terra/raster/io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"

namespace terra::raster {
namespace {

struct ReadCursor {
  std::span<const uint8_t> bytes;
  size_t pos = 0;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  *err = msg;
  png_longjmp(png, 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

void write_fn(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void read_fn(png_structp png, png_bytep data, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes.size()) png_error(png, "unexpected end of PNG data");
  std::memcpy(data, cur->bytes.data() + cur->pos, len);
  cur->pos += len;
}

}  // namespace

std::vector<uint8_t> encode_png(const PngImage& img) {
  if (img.width < 1 || img.height < 1) throw InvalidArgument("PNG extents must be positive");
  if (img.channels != 1 && img.channels != 3) throw InvalidArgument("PNG encoder supports 1 or 3 channels");
  if (img.bit_depth != 8 && img.bit_depth != 16) throw InvalidArgument("PNG encoder supports 8 or 16 bits");
  const size_t row_samples = static_cast<size_t>(img.width) * img.channels;
  if (img.samples.size() != row_samples * img.height) throw InvalidArgument("PNG sample count mismatch");

  const size_t bps = img.bit_depth / 8;
  std::vector<uint8_t> rows(row_samples * bps * img.height);
  for (size_t i = 0; i < img.samples.size(); ++i) {
    if (bps == 1) {
      if (img.samples[i] > 255) throw InvalidArgument("8-bit PNG sample out of range");
      rows[i] = static_cast<uint8_t>(img.samples[i]);
    } else {
      rows[2 * i] = static_cast<uint8_t>(img.samples[i] >> 8);
      rows[2 * i + 1] = static_cast<uint8_t>(img.samples[i] & 0xff);
    }
  }

  std::string err;
  std::vector<uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<png_bytep> ptrs(img.height);
  for (int y = 0; y < img.height; ++y) ptrs[y] = rows.data() + static_cast<size_t>(y) * row_samples * bps;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, write_fn, nullptr);
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

PngImage decode_png(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG stream");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  ReadCursor cur{bytes, 0};
  PngImage img;
  std::vector<uint8_t> rows;
  std::vector<png_bytep> ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed: " + err);
  }
  png_set_read_fn(png, &cur, read_fn);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  rows.resize(rowbytes * img.height);
  ptrs.resize(img.height);
  for (int y = 0; y < img.height; ++y) ptrs[y] = rows.data() + rowbytes * y;
  png_read_image(png, ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const size_t n = static_cast<size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    img.samples[i] = img.bit_depth == 16 ? static_cast<uint16_t>(rows[2 * i] << 8 | rows[2 * i + 1]) : rows[i];
  return img;
}

std::vector<uint8_t> encode_heightmap_png(const Heightmap& hm) {
  PngImage img{hm.width, hm.height, 1, 16, std::vector<uint16_t>(hm.size())};
  for (size_t i = 0; i < hm.size(); ++i) {
    const long v = std::lround(hm.elevations[i]);
    if (v < 0 || v > 65535) throw InvalidArgument("elevation does not fit a 16-bit PNG sample");
    img.samples[i] = static_cast<uint16_t>(v);
  }
  return encode_png(img);
}

Heightmap decode_heightmap_png(std::span<const uint8_t> bytes, double resolution_m) {
  PngImage img = decode_png(bytes);
  if (img.channels != 1) throw FormatError("heightmap PNG must be grayscale");
  std::vector<float> v(img.samples.begin(), img.samples.end());
  return Heightmap(img.width, img.height, std::move(v), resolution_m);
}

std::vector<uint8_t> encode_texture_png(const Texture& tex) {
  return encode_png(PngImage{tex.width, tex.height, 3, 8, std::vector<uint16_t>(tex.rgb.begin(), tex.rgb.end())});
}

Texture decode_texture_png(std::span<const uint8_t> bytes) {
  PngImage img = decode_png(bytes);
  if (img.channels != 3 || img.bit_depth != 8) throw FormatError("expected an 8-bit RGB PNG");
  return Texture(img.width, img.height, std::vector<uint8_t>(img.samples.begin(), img.samples.end()));
}

std::string sidecar_to_json(const Sidecar& s) {
  nlohmann::json j{{"resolution_m", s.resolution_m}, {"source_id", s.source_id}, {"max_elevation_m", s.max_elevation_m}};
  return j.dump(2);
}

Sidecar sidecar_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return Sidecar{j.at("resolution_m").get<double>(), j.at("source_id").get<std::string>(),
                   j.at("max_elevation_m").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad sidecar: ") + e.what());
  }
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

}  // namespace terra::raster

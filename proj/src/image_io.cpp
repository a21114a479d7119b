// Copyright 2026 the zsr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "zsr/image.hpp"

namespace zsr {

namespace {

uint8_t to_byte(double v) {
  int q = static_cast<int>(std::lround(v * 255.0));
  return static_cast<uint8_t>(std::min(255, std::max(0, q)));
}

}  // namespace

ImagePlane read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("read_png: failed to decode " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY ||
      color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<uint8_t> row(png_get_rowbytes(png, info));
  ImagePlane img(static_cast<int>(h), static_cast<int>(w), 3);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(static_cast<int>(y), static_cast<int>(x), c) =
            row[x * 3 + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

void write_png(const std::string& path, const ImagePlane& img) {
  if (img.channels != 3)
    throw std::invalid_argument("write_png: expected 3 channels");
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("write_png: failed to encode " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) row[x * 3 + c] = to_byte(img.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

FlowField read_flow(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_flow: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "ZSFLOW01", 8) != 0)
    throw std::runtime_error("read_flow: bad magic in " + path);
  uint32_t h = 0, w = 0;
  f.read(reinterpret_cast<char*>(&h), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  if (!f || h == 0 || w == 0)
    throw std::runtime_error("read_flow: bad header in " + path);
  FlowField flow(static_cast<int>(h), static_cast<int>(w));
  std::vector<float> plane(static_cast<size_t>(h) * w);
  f.read(reinterpret_cast<char*>(plane.data()), plane.size() * sizeof(float));
  for (size_t i = 0; i < plane.size(); ++i) flow.dx[i] = plane[i];
  f.read(reinterpret_cast<char*>(plane.data()), plane.size() * sizeof(float));
  for (size_t i = 0; i < plane.size(); ++i) flow.dy[i] = plane[i];
  if (!f) throw std::runtime_error("read_flow: truncated " + path);
  return flow;
}

void write_flow(const std::string& path, const FlowField& flow) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_flow: cannot open " + path);
  f.write("ZSFLOW01", 8);
  uint32_t h = static_cast<uint32_t>(flow.height);
  uint32_t w = static_cast<uint32_t>(flow.width);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  std::vector<float> plane(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < plane.size(); ++i)
    plane[i] = static_cast<float>(flow.dx[i]);
  f.write(reinterpret_cast<const char*>(plane.data()),
          plane.size() * sizeof(float));
  for (size_t i = 0; i < plane.size(); ++i)
    plane[i] = static_cast<float>(flow.dy[i]);
  f.write(reinterpret_cast<const char*>(plane.data()),
          plane.size() * sizeof(float));
  if (!f) throw std::runtime_error("write_flow: failed writing " + path);
}

namespace {

struct JpegErr {
  jpeg_error_mgr mgr;
  jmp_buf env;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  JpegErr* err = reinterpret_cast<JpegErr*>(cinfo->err);
  longjmp(err->env, 1);
}

}  // namespace

ImagePlane jpeg_roundtrip(const ImagePlane& img, int quality) {
  if (img.channels != 3)
    throw std::invalid_argument("jpeg_roundtrip: expected 3 channels");
  quality = std::min(100, std::max(1, quality));

  std::vector<uint8_t> rgb(static_cast<size_t>(img.height) * img.width * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(static_cast<size_t>(y) * img.width + x) * 3 + c] =
            to_byte(img.at(y, x, c));

  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  {
    jpeg_compress_struct cinfo;
    JpegErr jerr;
    cinfo.err = jpeg_std_error(&jerr.mgr);
    jerr.mgr.error_exit = jpeg_error_exit;
    if (setjmp(jerr.env)) {
      jpeg_destroy_compress(&cinfo);
      if (buf) free(buf);
      throw std::runtime_error("jpeg_roundtrip: encode failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buf, &buf_size);
    cinfo.image_width = img.width;
    cinfo.image_height = img.height;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    // RGB-coded JPEG, 4:4:4: avoids the lossy YCbCr integer conversion so a
    // quality-100 round trip stays within DCT rounding of the input.
    jpeg_set_colorspace(&cinfo, JCS_RGB);
    jpeg_set_quality(&cinfo, quality, TRUE);
    for (int c = 0; c < cinfo.num_components; ++c) {
      cinfo.comp_info[c].h_samp_factor = 1;
      cinfo.comp_info[c].v_samp_factor = 1;
    }
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row =
          &rgb[static_cast<size_t>(cinfo.next_scanline) * img.width * 3];
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }

  ImagePlane out(img.height, img.width, 3);
  {
    jpeg_decompress_struct dinfo;
    JpegErr jerr;
    dinfo.err = jpeg_std_error(&jerr.mgr);
    jerr.mgr.error_exit = jpeg_error_exit;
    if (setjmp(jerr.env)) {
      jpeg_destroy_decompress(&dinfo);
      free(buf);
      throw std::runtime_error("jpeg_roundtrip: decode failed");
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, buf, buf_size);
    jpeg_read_header(&dinfo, TRUE);
    jpeg_start_decompress(&dinfo);
    std::vector<uint8_t> row(static_cast<size_t>(dinfo.output_width) *
                             dinfo.output_components);
    int y = 0;
    while (dinfo.output_scanline < dinfo.output_height) {
      JSAMPROW rp = row.data();
      jpeg_read_scanlines(&dinfo, &rp, 1);
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(y, x, c) = row[x * 3 + c] / 255.0;
      ++y;
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  free(buf);
  return out;
}

}  // namespace zsr

#include "sscd/image_io.hpp"

#include <png.h>

#include <cstring>

#include <torch/torch.h>

#include "sscd/error.hpp"

namespace fs = std::filesystem;

namespace sscd {
namespace {

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw IoError("no such file: " + path.string());
  }
}

}  // namespace

RasterU8 read_png(const fs::path& path, int channels) {
  require_file(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot decode " + path.string() + ": " + image.message);
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  RasterU8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + image.message);
  }
  return out;
}

ImageSize read_png_size(const fs::path& path) {
  require_file(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot decode " + path.string() + ": " + image.message);
  }
  ImageSize size{static_cast<int>(image.width), static_cast<int>(image.height)};
  png_image_free(&image);
  return size;
}

void write_png(const fs::path& path, const RasterU8& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw ValidationError("write_png: channels must be 1 or 3");
  }
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = raster.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raster.pixels.data(), 0,
                               nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

torch::Tensor read_rgb_tensor(const fs::path& path) {
  auto raster = read_png(path, 3);
  auto hwc = torch::from_blob(raster.pixels.data(), {raster.height, raster.width, 3},
                              torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

torch::Tensor read_mask_tensor(const fs::path& path) {
  auto raster = read_png(path, 1);
  auto hw = torch::from_blob(raster.pixels.data(), {raster.height, raster.width},
                             torch::kUInt8);
  return hw.ne(0).to(torch::kUInt8).contiguous();
}

void write_tensor_png(const fs::path& path, const torch::Tensor& image) {
  auto t = image.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
  RasterU8 raster;
  if (t.dim() == 2) {
    raster.channels = 1;
    raster.height = static_cast<int>(t.size(0));
    raster.width = static_cast<int>(t.size(1));
  } else if (t.dim() == 3 && t.size(0) == 3) {
    raster.channels = 3;
    raster.height = static_cast<int>(t.size(1));
    raster.width = static_cast<int>(t.size(2));
    t = t.permute({1, 2, 0});
  } else {
    throw ValidationError("write_tensor_png: expected [H, W] or [3, H, W]");
  }
  t = t.contiguous();
  raster.pixels.assign(t.data_ptr<std::uint8_t>(), t.data_ptr<std::uint8_t>() + t.numel());
  write_png(path, raster);
}

}  // namespace sscd

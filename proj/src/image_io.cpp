#include "mncd/image_io.hpp"

#include <png.h>

#include <cstring>

#include "mncd/error.hpp"

namespace mncd {

Image8 read_png(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw MissingFileError("missing image file: " + path.string());
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ImageDecodeError("not a readable PNG: " + path.string() + " (" + png.message + ")");
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 img;
  img.height = png.height;
  img.width = png.width;
  img.channels = color ? 3 : 1;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ImageDecodeError("corrupt PNG: " + path.string() + " (" + png.message + ")");
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ArgumentError("write_png: channels must be 1 or 3");
  }
  if (static_cast<std::int64_t>(image.pixels.size()) !=
      image.height * image.width * image.channels) {
    throw ArgumentError("write_png: pixel buffer size mismatch");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError("failed to write PNG: " + path.string() + " (" + png.message + ")");
  }
}

}  // namespace mncd

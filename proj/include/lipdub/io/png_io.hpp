#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lipdub/error.hpp"
#include "lipdub/image.hpp"

namespace lipdub {

inline ImageBuf load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("load_png: cannot open '" + path + "': " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<uint8_t> bytes(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("load_png: cannot decode '" + path + "': " + msg);
    }
    ImageBuf img = ImageBuf::make(static_cast<int>(image.height), static_cast<int>(image.width), 3);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

inline void save_png(const ImageBuf& img, const std::string& path) {
    img.validate();
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<uint8_t> bytes(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i)
        bytes[i] = static_cast<uint8_t>(std::lround(img.data[i] * 255.0));
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw IoError("save_png: cannot write '" + path + "': " + image.message);
}

}  // namespace lipdub

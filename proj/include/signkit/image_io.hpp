#pragma once

// PNG and JPEG decoding at the file boundary. Requires linking libpng and libjpeg.

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>

#include "annotations.hpp"
#include "error.hpp"
#include "imaging.hpp"

namespace signkit {

namespace detail {

inline PixelImage decode_png(const std::string& bytes, const std::string& name) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
        throw io_error("cannot decode PNG " + name + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, data.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw io_error("cannot decode PNG " + name + ": " + msg);
    }
    return PixelImage(static_cast<int>(image.width), static_cast<int>(image.height), 3,
                      std::move(data));
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Objects with destructors all live in the caller, so the longjmp never skips one.
inline bool decode_jpeg_raw(const std::string& bytes, std::vector<std::uint8_t>& data, int& width,
                            int& height, char* message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        std::strcpy(message, err.message);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
                 static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = static_cast<int>(cinfo.output_width);
    height = static_cast<int>(cinfo.output_height);
    const auto stride = static_cast<std::size_t>(width) * 3;
    data.resize(stride * static_cast<std::size_t>(height));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = data.data() + stride * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

inline PixelImage decode_jpeg(const std::string& bytes, const std::string& name) {
    std::vector<std::uint8_t> data;
    int width = 0;
    int height = 0;
    char message[JMSG_LENGTH_MAX] = {};
    if (!decode_jpeg_raw(bytes, data, width, height, message)) {
        throw io_error("cannot decode JPEG " + name + ": " + message);
    }
    return PixelImage(width, height, 3, std::move(data));
}

} // namespace detail

/// Decodes a PNG or JPEG file (sniffed by signature) into a 3-channel image.
inline PixelImage read_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    static constexpr unsigned char png_sig[] = {0x89, 'P', 'N', 'G'};
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), png_sig, 4) == 0) {
        return detail::decode_png(bytes, path.string());
    }
    if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
        static_cast<unsigned char>(bytes[1]) == 0xD8 &&
        static_cast<unsigned char>(bytes[2]) == 0xFF) {
        return detail::decode_jpeg(bytes, path.string());
    }
    throw io_error("unsupported image format (expected PNG or JPEG): " + path.string());
}

/// Writes an 8-bit PNG. Output bytes depend only on the pixels.
inline void write_png(const std::filesystem::path& path, const PixelImage& img) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (png_image_write_to_file(&image, path.string().c_str(), 0, img.data().data(), 0, nullptr) ==
        0) {
        throw io_error("cannot write PNG " + path.string() + ": " + image.message);
    }
}

} // namespace signkit

// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/image.hpp"

#include <png.h>
// jpeglib.h needs size_t/FILE declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <limits>

#include "vedit/codec.hpp"
#include "vedit/error.hpp"

namespace vedit {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0) throw Error(Errc::InvalidArgument, "image dimensions must be positive");
    if (channels != 1 && channels != 3) throw Error(Errc::InvalidArgument, "image channels must be 1 or 3");
    data_.assign(plane_size() * static_cast<std::size_t>(channels), fill);
}

Image Image::to_gray() const {
    if (channels_ == 1) return *this;
    Image out(width_, height_, 1);
    auto r = plane(0);
    auto g = plane(1);
    auto b = plane(2);
    auto dst = out.plane(0);
    for (std::size_t i = 0; i < plane_size(); ++i) dst[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    return out;
}

namespace {

Image from_interleaved(const std::uint8_t* px, int width, int height, int channels) {
    Image img(width, height, channels);
    const std::size_t n = img.plane_size();
    for (int c = 0; c < channels; ++c) {
        auto dst = img.plane(c);
        for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(px[i * channels + c]) / 255.0f;
    }
    return img;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
        throw Error(Errc::ImageDecodeError, image.message);
    }
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) == 0) {
        png_image_free(&image);
        throw Error(Errc::ImageDecodeError, image.message);
    }
    return from_interleaved(buf.data(), static_cast<int>(image.width), static_cast<int>(image.height), gray ? 1 : 3);
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr info) {
    auto* mgr = reinterpret_cast<JpegErrorManager*>(info->err);
    std::longjmp(mgr->jump, 1);
}

Image decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    std::vector<std::uint8_t> buf;
    int width = 0;
    int height = 0;
    int channels = 0;
    if (setjmp(err.jump) != 0) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(Errc::ImageDecodeError, "corrupt JPEG stream");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = static_cast<int>(cinfo.output_width);
    height = static_cast<int>(cinfo.output_height);
    channels = cinfo.output_components;
    buf.resize(static_cast<std::size_t>(width) * height * channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_interleaved(buf.data(), width, height, channels);
}

std::uint8_t quantize(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G'};
    if (bytes.size() >= 4 && std::equal(std::begin(kPng), std::end(kPng), bytes.begin())) return decode_png(bytes);
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return decode_jpeg(bytes);
    throw Error(Errc::ImageDecodeError, "unrecognized image format");
}

Image load_image(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    try {
        return decode_image({reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()});
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    if (img.empty()) throw Error(Errc::ImageEncodeError, "empty image");
    const int ch = img.channels();
    const std::size_t n = img.plane_size();
    std::vector<std::uint8_t> px(n * ch);
    for (int c = 0; c < ch; ++c) {
        auto src = img.plane(c);
        for (std::size_t i = 0; i < n; ++i) px[i * ch + c] = quantize(src[i]);
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = ch == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr) == 0) {
        throw Error(Errc::ImageEncodeError, image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr) == 0) {
        throw Error(Errc::ImageEncodeError, image.message);
    }
    out.resize(size);
    return out;
}

void save_png(const Image& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

void save_mask_png(std::span<const std::uint8_t> mask, int width, int height, const std::filesystem::path& path) {
    Image img(width, height, 1);
    auto dst = img.plane(0);
    for (std::size_t i = 0; i < dst.size() && i < mask.size(); ++i) dst[i] = mask[i] != 0 ? 1.0f : 0.0f;
    save_png(img, path);
}

double psnr(const Image& a, const Image& b, std::span<const std::uint8_t> valid, int border) {
    if (!a.same_shape(b)) throw Error(Errc::DimensionMismatch, "psnr operands differ in shape");
    double sum = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels(); ++c) {
        for (int y = border; y < a.height() - border; ++y) {
            for (int x = border; x < a.width() - border; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * a.width() + x;
                if (!valid.empty() && valid[i] == 0) continue;
                const double d = static_cast<double>(a.at(c, y, x)) - b.at(c, y, x);
                sum += d * d;
                ++count;
            }
        }
    }
    if (count == 0) return 0.0;
    const double mse = sum / static_cast<double>(count);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace vedit

// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vedit {

/// Planar float image with values in [0, 1]. Channels are stored one plane
/// after another, each plane row-major.
class Image {
  public:
    Image() = default;
    Image(int width, int height, int channels, float fill = 0.0f);

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] int channels() const noexcept { return channels_; }
    [[nodiscard]] std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    [[nodiscard]] std::span<const float> plane(int c) const {
        return {data_.data() + c * plane_size(), plane_size()};
    }
    float& at(int c, int y, int x) { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
    [[nodiscard]] float at(int c, int y, int x) const {
        return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
    }

    [[nodiscard]] std::span<float> data() noexcept { return data_; }
    [[nodiscard]] std::span<const float> data() const noexcept { return data_; }

    [[nodiscard]] bool same_shape(const Image& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    /// Luma (Rec. 601 weights) for 3-channel images; a copy for 1-channel.
    [[nodiscard]] Image to_gray() const;

    friend bool operator==(const Image&, const Image&) = default;

  private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Decodes PNG or JPEG (sniffed from the leading bytes). Gray inputs load as
/// one channel, everything else as RGB.
Image decode_image(std::span<const std::uint8_t> bytes);
Image load_image(const std::filesystem::path& path);

/// 8-bit PNG encoding; values are clamped to [0,1] and rounded.
std::vector<std::uint8_t> encode_png(const Image& image);
void save_png(const Image& image, const std::filesystem::path& path);

/// Mask export: nonzero entries become 255.
void save_mask_png(std::span<const std::uint8_t> mask, int width, int height, const std::filesystem::path& path);

/// Peak signal-to-noise ratio in dB over pixels where `valid` is nonzero (all
/// pixels when `valid` is empty), restricted to a border-excluded interior.
double psnr(const Image& a, const Image& b, std::span<const std::uint8_t> valid = {}, int border = 0);

}  // namespace vedit

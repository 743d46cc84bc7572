// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vedit {

/// C x H x W float tensor, row-major within each channel.
class LatentGrid {
  public:
    LatentGrid() = default;
    LatentGrid(int channels, int height, int width, float fill = 0.0f);

    [[nodiscard]] int channels() const noexcept { return channels_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }
    [[nodiscard]] bool same_shape(const LatentGrid& o) const noexcept {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    float& at(int c, int y, int x) { return values_[index(c, y, x)]; }
    [[nodiscard]] float at(int c, int y, int x) const { return values_[index(c, y, x)]; }
    [[nodiscard]] std::span<float> values() noexcept { return values_; }
    [[nodiscard]] std::span<const float> values() const noexcept { return values_; }
    [[nodiscard]] float* row(int c, int y) { return values_.data() + index(c, y, 0); }
    [[nodiscard]] const float* row(int c, int y) const { return values_.data() + index(c, y, 0); }

    /// Throws NonFiniteValue when any entry is NaN or infinite.
    void validate() const;

    /// Standard-normal entries from (seed, stream).
    static LatentGrid gaussian(int channels, int height, int width, std::uint64_t seed, std::uint64_t stream = 0);

    friend bool operator==(const LatentGrid&, const LatentGrid&) = default;

  private:
    [[nodiscard]] std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + static_cast<std::size_t>(y)) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<float> values_;
};

/// Variance schedule. alpha_bar(t) = prod_{i<=t} (1 - beta_i), alpha_bar(0) = 1.
class DiffusionSchedule {
  public:
    /// Throws InvalidArgument unless every beta lies in (0, 1).
    explicit DiffusionSchedule(std::vector<double> betas);

    /// Linear beta from `beta_start` to `beta_end` over `timesteps` steps.
    static DiffusionSchedule linear(int timesteps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

    [[nodiscard]] int timesteps() const noexcept { return static_cast<int>(betas_.size()); }
    [[nodiscard]] double beta(int t) const;
    [[nodiscard]] double alpha_bar(int t) const;
    [[nodiscard]] std::span<const double> betas() const noexcept { return betas_; }

  private:
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;  // index 0 holds 1.0
};

/// Opaque instruction conditioning; the kernel never interprets it.
struct ConditionHandle {
    std::string key;
};

/// eps_theta: same-shape noise prediction for a (possibly width-concatenated)
/// latent at timestep t.
class NoisePredictor {
  public:
    virtual ~NoisePredictor() = default;
    [[nodiscard]] virtual LatentGrid predict(const LatentGrid& latent, const ConditionHandle& cond, int t) const = 0;
};

class FunctionPredictor final : public NoisePredictor {
  public:
    using Fn = std::function<LatentGrid(const LatentGrid&, const ConditionHandle&, int)>;
    explicit FunctionPredictor(Fn fn) : fn_(std::move(fn)) {}
    [[nodiscard]] LatentGrid predict(const LatentGrid& latent, const ConditionHandle& cond, int t) const override {
        return fn_(latent, cond, t);
    }

  private:
    Fn fn_;
};

/// H x W soft mask in [0, 1], broadcast over latent channels.
class EditMask {
  public:
    EditMask() = default;
    EditMask(int height, int width, float fill = 0.0f);

    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] int width() const noexcept { return width_; }
    float& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    [[nodiscard]] float at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    [[nodiscard]] std::span<float> values() noexcept { return values_; }
    [[nodiscard]] std::span<const float> values() const noexcept { return values_; }
    /// Throws InvalidArgument when a value leaves [0, 1].
    void validate() const;

    friend bool operator==(const EditMask&, const EditMask&) = default;

  private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> values_;
};

/// sqrt(alpha_bar)*z0 + sqrt(1 - alpha_bar)*eps with an explicit coefficient.
LatentGrid forward_diffuse(const LatentGrid& z0, const LatentGrid& eps, double alpha_bar);
/// Same with alpha_bar taken from the schedule; 1 <= t <= T.
LatentGrid forward_diffuse(const LatentGrid& z0, int t, const LatentGrid& eps, const DiffusionSchedule& sched);

/// (C, H, W) + (C, H, W) -> (C, H, 2W); left half `zs`, right half `ze_t`.
LatentGrid concat_width(const LatentGrid& zs, const LatentGrid& ze_t);
/// Right half of an even-width grid.
LatentGrid crop_width(const LatentGrid& z);
/// (C1, H, W) + (C2, H, W) -> (C1 + C2, H, W).
LatentGrid concat_channel(const LatentGrid& zs, const LatentGrid& ze_t);
/// Channels [first, first + count).
LatentGrid slice_channels(const LatentGrid& z, int first, int count);

/// Mean squared error between eps and the right half of the prediction on
/// the width-concatenated input.
double edit_loss(const LatentGrid& zs, const LatentGrid& ze, const ConditionHandle& cond, int t, const LatentGrid& eps,
                 const NoisePredictor& predictor, const DiffusionSchedule& sched);

/// Channel-conditioning baseline: predictor sees concat_channel(zs, ze_t) and
/// the loss reads the channels that carried the noisy target.
double edit_loss_channel(const LatentGrid& zs, const LatentGrid& ze, const ConditionHandle& cond, int t,
                         const LatentGrid& eps, const NoisePredictor& predictor, const DiffusionSchedule& sched);

/// Clean-latent estimate (z_t - sqrt(1 - alpha_bar_t)*eps_hat) / sqrt(alpha_bar_t).
LatentGrid predict_x0(const LatentGrid& z_t, const LatentGrid& eps_hat, int t, const DiffusionSchedule& sched);

/// Deterministic (eta = 0) DDIM update from t to t_prev (t > t_prev >= 0).
LatentGrid ddim_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t, int t_prev,
                     const DiffusionSchedule& sched);

/// Uniform-stride timesteps T/steps * {steps, ..., 1}, descending.
std::vector<int> ddim_timesteps(int timesteps, int steps);

/// (1 - m)*zs_tm1 + m*z_tm1, mask broadcast across channels.
LatentGrid masked_blend(const LatentGrid& zs_tm1, const LatentGrid& z_tm1, const EditMask& m);

/// Area-average resampling to (h, w).
EditMask resize_mask(const EditMask& m, int h, int w);

struct SampleConfig {
    int steps = 50;
    std::uint64_t seed = 0;
    // Draw the source-trajectory noise once instead of per step.
    bool shared_source_noise = false;
};

/// DDIM sampling on the width-concatenated latent. Without a mask this is
/// plain conditional sampling; with one, every step blends the update with
/// the source latent forward-diffused to the next timestep.
LatentGrid masked_ddim_sample(const LatentGrid& zs, const ConditionHandle& cond, const std::optional<EditMask>& mask,
                              const NoisePredictor& predictor, const DiffusionSchedule& sched,
                              const SampleConfig& cfg = {});

// Mock predictors for demonstrations and golden runs.

/// Returns a fixed noise tensor on the right half (and zeros on the left).
std::unique_ptr<NoisePredictor> make_fixed_noise_predictor(LatentGrid eps);
/// Returns the noise that makes the clean estimate of the right half equal `target`.
std::unique_ptr<NoisePredictor> make_target_predictor(LatentGrid target, DiffusionSchedule sched);
/// Deterministic pseudo-noise keyed by condition, timestep and input shape.
std::unique_ptr<NoisePredictor> make_hash_predictor();

/// Raw latent file: 8-byte header (C, H, W as little-endian uint16, two zero
/// pad bytes) then little-endian float32 values. A JSON sidecar at
/// `<path>.json` records the shape and dtype.
void write_latent(const LatentGrid& z, const std::filesystem::path& path);
LatentGrid read_latent(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_latent(const LatentGrid& z);
LatentGrid decode_latent(std::span<const std::uint8_t> bytes);

}  // namespace vedit

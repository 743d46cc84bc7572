// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vedit/error.hpp"
#include "vedit/rng.hpp"
#include "vedit/simd/kernels.hpp"

namespace vedit {

namespace {

std::string shape_str(const LatentGrid& z) {
    return "(" + std::to_string(z.channels()) + "," + std::to_string(z.height()) + "," + std::to_string(z.width()) + ")";
}

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what) {
    if (!a.same_shape(b)) throw Error(Errc::ShapeMismatch, std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

LatentGrid::LatentGrid(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0) throw Error(Errc::InvalidArgument, "latent dimensions must be positive");
    values_.assign(static_cast<std::size_t>(channels) * plane_size(), fill);
}

void LatentGrid::validate() const {
    for (float v : values_) {
        if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "latent contains a non-finite value");
    }
}

LatentGrid LatentGrid::gaussian(int channels, int height, int width, std::uint64_t seed, std::uint64_t stream) {
    LatentGrid z(channels, height, width);
    GaussianStream g(seed, stream);
    for (float& v : z.values_) v = static_cast<float>(g.next());
    return z;
}

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw Error(Errc::InvalidArgument, "schedule needs at least one step");
    alpha_bar_.resize(betas_.size() + 1);
    alpha_bar_[0] = 1.0;
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) throw Error(Errc::InvalidArgument, "beta must lie in (0, 1)");
        alpha_bar_[i + 1] = alpha_bar_[i] * (1.0 - betas_[i]);
    }
}

DiffusionSchedule DiffusionSchedule::linear(int timesteps, double beta_start, double beta_end) {
    if (timesteps < 1) throw Error(Errc::InvalidArgument, "timesteps must be positive");
    std::vector<double> betas(static_cast<std::size_t>(timesteps));
    for (int i = 0; i < timesteps; ++i) {
        const double f = timesteps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(timesteps - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + f * (beta_end - beta_start);
    }
    return DiffusionSchedule(std::move(betas));
}

double DiffusionSchedule::beta(int t) const {
    if (t < 1 || t > timesteps()) throw Error(Errc::TimestepOutOfRange, "t=" + std::to_string(t));
    return betas_[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::alpha_bar(int t) const {
    if (t < 0 || t > timesteps()) throw Error(Errc::TimestepOutOfRange, "t=" + std::to_string(t));
    return alpha_bar_[static_cast<std::size_t>(t)];
}

EditMask::EditMask(int height, int width, float fill) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) throw Error(Errc::InvalidArgument, "mask dimensions must be positive");
    values_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
}

void EditMask::validate() const {
    for (float v : values_) {
        if (!(v >= 0.0f && v <= 1.0f)) throw Error(Errc::InvalidArgument, "mask value outside [0,1]");
    }
}

LatentGrid forward_diffuse(const LatentGrid& z0, const LatentGrid& eps, double alpha_bar) {
    require_same_shape(z0, eps, "forward_diffuse");
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw Error(Errc::InvalidArgument, "alpha_bar outside [0,1]");
    LatentGrid out(z0.channels(), z0.height(), z0.width());
    simd::active().axpby(static_cast<float>(std::sqrt(alpha_bar)), z0.values().data(),
                         static_cast<float>(std::sqrt(1.0 - alpha_bar)), eps.values().data(), out.values().data(),
                         out.size());
    return out;
}

LatentGrid forward_diffuse(const LatentGrid& z0, int t, const LatentGrid& eps, const DiffusionSchedule& sched) {
    require_same_shape(z0, eps, "forward_diffuse");
    if (t < 1 || t > sched.timesteps()) throw Error(Errc::TimestepOutOfRange, "forward_diffuse t=" + std::to_string(t));
    return forward_diffuse(z0, eps, sched.alpha_bar(t));
}

LatentGrid concat_width(const LatentGrid& zs, const LatentGrid& ze_t) {
    require_same_shape(zs, ze_t, "concat_width");
    const int w = zs.width();
    LatentGrid out(zs.channels(), zs.height(), 2 * w);
    for (int c = 0; c < zs.channels(); ++c) {
        for (int y = 0; y < zs.height(); ++y) {
            std::copy_n(zs.row(c, y), w, out.row(c, y));
            std::copy_n(ze_t.row(c, y), w, out.row(c, y) + w);
        }
    }
    return out;
}

LatentGrid crop_width(const LatentGrid& z) {
    if (z.width() % 2 != 0) throw Error(Errc::OddWidth, "crop_width on width " + std::to_string(z.width()));
    const int half = z.width() / 2;
    LatentGrid out(z.channels(), z.height(), half);
    for (int c = 0; c < z.channels(); ++c) {
        for (int y = 0; y < z.height(); ++y) std::copy_n(z.row(c, y) + half, half, out.row(c, y));
    }
    return out;
}

LatentGrid concat_channel(const LatentGrid& zs, const LatentGrid& ze_t) {
    if (zs.height() != ze_t.height() || zs.width() != ze_t.width()) {
        throw Error(Errc::ShapeMismatch, "concat_channel: " + shape_str(zs) + " vs " + shape_str(ze_t));
    }
    LatentGrid out(zs.channels() + ze_t.channels(), zs.height(), zs.width());
    auto dst = out.values();
    std::copy(zs.values().begin(), zs.values().end(), dst.begin());
    std::copy(ze_t.values().begin(), ze_t.values().end(), dst.begin() + static_cast<std::ptrdiff_t>(zs.size()));
    return out;
}

LatentGrid slice_channels(const LatentGrid& z, int first, int count) {
    if (first < 0 || count <= 0 || first + count > z.channels()) {
        throw Error(Errc::ShapeMismatch, "slice_channels out of range for " + shape_str(z));
    }
    LatentGrid out(count, z.height(), z.width());
    const auto begin = z.values().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(first) * z.plane_size());
    std::copy_n(begin, out.size(), out.values().begin());
    return out;
}

namespace {

LatentGrid checked_predict(const NoisePredictor& predictor, const LatentGrid& input, const ConditionHandle& cond, int t) {
    LatentGrid out = predictor.predict(input, cond, t);
    require_same_shape(input, out, "noise predictor output");
    return out;
}

double mean_sq_diff(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "loss");
    return simd::active().sq_diff_sum(a.values().data(), b.values().data(), a.size()) / static_cast<double>(a.size());
}

}  // namespace

double edit_loss(const LatentGrid& zs, const LatentGrid& ze, const ConditionHandle& cond, int t, const LatentGrid& eps,
                 const NoisePredictor& predictor, const DiffusionSchedule& sched) {
    require_same_shape(zs, ze, "edit_loss");
    const LatentGrid ze_t = forward_diffuse(ze, t, eps, sched);
    const LatentGrid z_t = concat_width(zs, ze_t);
    return mean_sq_diff(eps, crop_width(checked_predict(predictor, z_t, cond, t)));
}

double edit_loss_channel(const LatentGrid& zs, const LatentGrid& ze, const ConditionHandle& cond, int t,
                         const LatentGrid& eps, const NoisePredictor& predictor, const DiffusionSchedule& sched) {
    const LatentGrid ze_t = forward_diffuse(ze, t, eps, sched);
    const LatentGrid z_t = concat_channel(zs, ze_t);
    const LatentGrid pred = checked_predict(predictor, z_t, cond, t);
    return mean_sq_diff(eps, slice_channels(pred, zs.channels(), ze.channels()));
}

LatentGrid predict_x0(const LatentGrid& z_t, const LatentGrid& eps_hat, int t, const DiffusionSchedule& sched) {
    require_same_shape(z_t, eps_hat, "predict_x0");
    const double ab = sched.alpha_bar(t);
    const auto& k = simd::active();
    LatentGrid x0(z_t.channels(), z_t.height(), z_t.width());
    k.axpby(1.0f, z_t.values().data(), static_cast<float>(-std::sqrt(1.0 - ab)), eps_hat.values().data(),
            x0.values().data(), x0.size());
    k.axpby(static_cast<float>(1.0 / std::sqrt(ab)), x0.values().data(), 0.0f, x0.values().data(), x0.values().data(),
            x0.size());
    return x0;
}

LatentGrid ddim_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t, int t_prev,
                     const DiffusionSchedule& sched) {
    require_same_shape(z_t, eps_hat, "ddim_step");
    if (!(t > t_prev && t_prev >= 0)) {
        throw Error(Errc::TimestepOrder, "ddim_step needs t > t_prev >= 0, got " + std::to_string(t) + " -> " +
                                             std::to_string(t_prev));
    }
    if (t > sched.timesteps()) throw Error(Errc::TimestepOutOfRange, "ddim_step t=" + std::to_string(t));
    const LatentGrid x0 = predict_x0(z_t, eps_hat, t, sched);
    const double ab_prev = sched.alpha_bar(t_prev);
    LatentGrid out(z_t.channels(), z_t.height(), z_t.width());
    simd::active().axpby(static_cast<float>(std::sqrt(ab_prev)), x0.values().data(),
                         static_cast<float>(std::sqrt(1.0 - ab_prev)), eps_hat.values().data(), out.values().data(),
                         out.size());
    return out;
}

std::vector<int> ddim_timesteps(int timesteps, int steps) {
    if (steps < 1 || steps > timesteps) throw Error(Errc::InvalidArgument, "steps must lie in [1, T]");
    const int stride = timesteps / steps;
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(steps));
    for (int i = steps; i >= 1; --i) ts.push_back(i * stride);
    return ts;
}

LatentGrid masked_blend(const LatentGrid& zs_tm1, const LatentGrid& z_tm1, const EditMask& m) {
    require_same_shape(zs_tm1, z_tm1, "masked_blend");
    if (m.height() != zs_tm1.height() || m.width() != zs_tm1.width()) {
        throw Error(Errc::ShapeMismatch, "mask " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                                             " vs latent " + shape_str(zs_tm1));
    }
    LatentGrid out(zs_tm1.channels(), zs_tm1.height(), zs_tm1.width());
    const auto& k = simd::active();
    const std::size_t n = zs_tm1.plane_size();
    for (int c = 0; c < zs_tm1.channels(); ++c) {
        const std::size_t off = static_cast<std::size_t>(c) * n;
        k.blend(m.values().data(), zs_tm1.values().data() + off, z_tm1.values().data() + off, out.values().data() + off, n);
    }
    return out;
}

namespace {

// weights[o] lists (source index, weight) for output cell o of an area-average
// resample from `in` cells to `out` cells.
std::vector<std::vector<std::pair<int, double>>> area_weights(int in, int out) {
    std::vector<std::vector<std::pair<int, double>>> weights(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int o = 0; o < out; ++o) {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        for (int i = static_cast<int>(std::floor(lo)); i < in && i < hi; ++i) {
            const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (overlap > 0.0) weights[static_cast<std::size_t>(o)].emplace_back(i, overlap / scale);
        }
    }
    return weights;
}

}  // namespace

EditMask resize_mask(const EditMask& m, int h, int w) {
    if (h <= 0 || w <= 0) throw Error(Errc::InvalidArgument, "resize_mask target must be positive");
    if (h == m.height() && w == m.width()) return m;
    const auto wx = area_weights(m.width(), w);
    const auto wy = area_weights(m.height(), h);
    std::vector<double> rows(static_cast<std::size_t>(m.height()) * w, 0.0);
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (const auto& [i, wt] : wx[static_cast<std::size_t>(x)]) acc += wt * m.at(y, i);
            rows[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    EditMask out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (const auto& [i, wt] : wy[static_cast<std::size_t>(y)]) acc += wt * rows[static_cast<std::size_t>(i) * w + x];
            out.at(y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    }
    return out;
}

LatentGrid masked_ddim_sample(const LatentGrid& zs, const ConditionHandle& cond, const std::optional<EditMask>& mask,
                              const NoisePredictor& predictor, const DiffusionSchedule& sched, const SampleConfig& cfg) {
    std::optional<EditMask> m;
    if (mask) {
        mask->validate();
        m = resize_mask(*mask, zs.height(), zs.width());
    }
    const auto ts = ddim_timesteps(sched.timesteps(), cfg.steps);
    LatentGrid z = LatentGrid::gaussian(zs.channels(), zs.height(), zs.width(), cfg.seed, 0);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
        const LatentGrid eps_hat = crop_width(checked_predict(predictor, concat_width(zs, z), cond, t));
        LatentGrid z_prev = ddim_step(z, eps_hat, t, t_prev, sched);
        if (m) {
            LatentGrid zs_prev = zs;
            if (t_prev > 0) {
                const std::uint64_t stream = cfg.shared_source_noise ? 1 : 1 + k;
                const LatentGrid noise = LatentGrid::gaussian(zs.channels(), zs.height(), zs.width(), cfg.seed, stream);
                zs_prev = forward_diffuse(zs, t_prev, noise, sched);
            }
            z_prev = masked_blend(zs_prev, z_prev, *m);
        }
        z = std::move(z_prev);
    }
    return z;
}

namespace {

class FixedNoisePredictor final : public NoisePredictor {
  public:
    explicit FixedNoisePredictor(LatentGrid eps) : eps_(std::move(eps)) {}
    [[nodiscard]] LatentGrid predict(const LatentGrid& latent, const ConditionHandle&, int) const override {
        return concat_width(LatentGrid(latent.channels(), latent.height(), latent.width() / 2), eps_);
    }

  private:
    LatentGrid eps_;
};

class TargetPredictor final : public NoisePredictor {
  public:
    TargetPredictor(LatentGrid target, DiffusionSchedule sched) : target_(std::move(target)), sched_(std::move(sched)) {}
    [[nodiscard]] LatentGrid predict(const LatentGrid& latent, const ConditionHandle&, int t) const override {
        const LatentGrid right = crop_width(latent);
        require_same_shape(right, target_, "target predictor");
        const double ab = sched_.alpha_bar(t);
        const auto& k = simd::active();
        LatentGrid eps(right.channels(), right.height(), right.width());
        k.axpby(1.0f, right.values().data(), static_cast<float>(-std::sqrt(ab)), target_.values().data(),
                eps.values().data(), eps.size());
        k.axpby(static_cast<float>(1.0 / std::sqrt(1.0 - ab)), eps.values().data(), 0.0f, eps.values().data(),
                eps.values().data(), eps.size());
        return concat_width(LatentGrid(right.channels(), right.height(), right.width()), eps);
    }

  private:
    LatentGrid target_;
    DiffusionSchedule sched_;
};

class HashPredictor final : public NoisePredictor {
  public:
    [[nodiscard]] LatentGrid predict(const LatentGrid& latent, const ConditionHandle& cond, int t) const override {
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char ch : cond.key) h = (h ^ ch) * 1099511628211ULL;
        h ^= static_cast<std::uint64_t>(t) * 0x9E3779B97F4A7C15ULL;
        LatentGrid out = LatentGrid::gaussian(latent.channels(), latent.height(), latent.width(), h, 7);
        // Tie the output to the input so the trajectory depends on the latent.
        simd::active().axpby(0.5f, out.values().data(), 0.1f, latent.values().data(), out.values().data(), out.size());
        return out;
    }
};

}  // namespace

std::unique_ptr<NoisePredictor> make_fixed_noise_predictor(LatentGrid eps) {
    return std::make_unique<FixedNoisePredictor>(std::move(eps));
}

std::unique_ptr<NoisePredictor> make_target_predictor(LatentGrid target, DiffusionSchedule sched) {
    return std::make_unique<TargetPredictor>(std::move(target), std::move(sched));
}

std::unique_ptr<NoisePredictor> make_hash_predictor() { return std::make_unique<HashPredictor>(); }

}  // namespace vedit

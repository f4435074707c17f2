#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "latent_audit/embedding_store.hpp"

namespace latent_audit {

/// H x W image with pixels in [-1, 1], stored row-major.
class Image {
public:
    Image() = default;
    /// Throws `InvalidArgument` on a zero dimension, a size mismatch, or a
    /// pixel outside [-1, 1].
    Image(std::size_t height, std::size_t width, std::vector<double> pixels);

    static Image filled(std::size_t height, std::size_t width, double value);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    std::span<const double> pixels() const noexcept { return pixels_; }
    double at(std::size_t r, std::size_t c) const { return pixels_[r * width_ + c]; }

    bool operator==(const Image&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> pixels_;
};

struct AugmentConfig {
    double sigma_noise = 0.0;
    std::uint64_t seed = 0;
};

/// clip(pixel + eps, -1, 1).
double apply_noise(double pixel, double eps);

/// Additive zero-mean Gaussian noise with clipping, i.i.d. per pixel and
/// drawn in row-major order from Rng(config.seed).
Image augment_image(const Image& image, const AugmentConfig& config);

/// Augments every image; image i uses substream i of `seed`.
std::vector<Image> augment_all(std::span<const Image> images, double sigma_noise, std::uint64_t seed);

/// Quantile of Rayleigh(scale): scale * sqrt(-2 ln(1 - q)).
double rayleigh_quantile(double q, double scale = 1.0);

/// Default saturation ceiling: the 99.9th percentile of Rayleigh(scale).
inline double default_p_max(double scale = 1.0) { return rayleigh_quantile(0.999, scale); }

/// Quarter-power compression onto [-1, 1]:
/// 2 * (min(raw, p_max) / p_max)^(1/4) - 1. Rejects negative raw values.
Image qpm_rescale(std::size_t height, std::size_t width, std::span<const double> raw, double p_max);

/// `count` size x size images of i.i.d. Rayleigh(scale) pixels passed
/// through qpm_rescale. Image i uses its own substream, so any subset can be
/// regenerated independently.
std::vector<Image> gen_rayleigh_images(std::size_t count, std::size_t size, double scale,
                                       std::uint64_t seed, double p_max = 0.0);

struct ToyDatasetSpec {
    std::size_t num_classes = 10;
    std::size_t per_class = 100;
    std::size_t size = 16;
    std::uint64_t class_template_seed = 0;
    std::uint64_t sample_seed = 0;
    double template_contrast = 6.0;
};

struct ToyDataset {
    std::vector<Image> images;
    LabelVector labels;
};

/// Class template images: smooth blob patterns in [0, 1], one per class,
/// drawn from `class_template_seed`.
std::vector<std::vector<double>> toy_class_templates(const ToyDatasetSpec& spec);

/// Sample i has class i % num_classes. Its raw power is
/// (1 + contrast * template) * Rayleigh(1) speckle, QPM-rescaled with
/// p_max = (1 + contrast) * default_p_max().
ToyDataset gen_toy_dataset(const ToyDatasetSpec& spec);

/// Flattens images (all the same shape) into an n x (H*W) matrix.
EmbeddingMatrix images_to_matrix(std::span<const Image> images, std::string source_id = {});

/// Inverse of images_to_matrix; rows must have height * width entries.
std::vector<Image> matrix_to_images(const EmbeddingMatrix& matrix, std::size_t height, std::size_t width);

}  // namespace latent_audit

#include "latent_audit/synth_data.hpp"

#include <algorithm>
#include <cmath>

#include "latent_audit/error.hpp"
#include "latent_audit/parallel.hpp"
#include "latent_audit/rng.hpp"

namespace latent_audit {

Image::Image(std::size_t height, std::size_t width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height_ == 0 || width_ == 0) {
        throw Error(ErrorKind::InvalidArgument, "image dimensions must be positive");
    }
    if (pixels_.size() != height_ * width_) {
        throw Error(ErrorKind::ShapeMismatch, "pixel count does not match height * width");
    }
    for (double p : pixels_) {
        if (!(p >= -1.0 && p <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "pixel value outside [-1, 1]");
        }
    }
}

Image Image::filled(std::size_t height, std::size_t width, double value) {
    return Image(height, width, std::vector<double>(height * width, value));
}

double apply_noise(double pixel, double eps) { return std::min(1.0, std::max(-1.0, pixel + eps)); }

Image augment_image(const Image& image, const AugmentConfig& config) {
    if (!(config.sigma_noise >= 0.0) || !std::isfinite(config.sigma_noise)) {
        throw Error(ErrorKind::InvalidArgument, "sigma_noise must be finite and >= 0");
    }
    if (config.sigma_noise == 0.0) {
        return image;
    }
    Rng rng(config.seed);
    std::vector<double> out(image.size());
    const auto in = image.pixels();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = apply_noise(in[i], config.sigma_noise * rng.normal());
    }
    return Image(image.height(), image.width(), std::move(out));
}

std::vector<Image> augment_all(std::span<const Image> images, double sigma_noise, std::uint64_t seed) {
    std::vector<Image> out(images.size());
    parallel_for(images.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = augment_image(images[i], {sigma_noise, substream_seed(seed, i)});
        }
    });
    return out;
}

double rayleigh_quantile(double q, double scale) { return scale * std::sqrt(-2.0 * std::log1p(-q)); }

Image qpm_rescale(std::size_t height, std::size_t width, std::span<const double> raw, double p_max) {
    if (!(p_max > 0.0) || !std::isfinite(p_max)) {
        throw Error(ErrorKind::InvalidArgument, "p_max must be positive");
    }
    if (raw.size() != height * width) {
        throw Error(ErrorKind::ShapeMismatch, "raw size does not match height * width");
    }
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!(raw[i] >= 0.0)) {
            throw Error(ErrorKind::NegativeInput, "raw value at " + std::to_string(i) + " is negative");
        }
        const double ratio = std::min(raw[i], p_max) / p_max;
        out[i] = 2.0 * std::sqrt(std::sqrt(ratio)) - 1.0;
    }
    return Image(height, width, std::move(out));
}

std::vector<Image> gen_rayleigh_images(std::size_t count, std::size_t size, double scale,
                                       std::uint64_t seed, double p_max) {
    if (size == 0) {
        throw Error(ErrorKind::InvalidArgument, "image size must be >= 1");
    }
    if (!(scale > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "Rayleigh scale must be positive");
    }
    if (p_max <= 0.0) {
        p_max = default_p_max(scale);
    }
    const std::uint64_t base = substream_seed(seed, stream::kRayleigh);
    std::vector<Image> out(count);
    parallel_for(count, [&](std::size_t begin, std::size_t end) {
        std::vector<double> raw(size * size);
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng(substream_seed(base, i));
            for (double& v : raw) {
                v = rng.rayleigh(scale);
            }
            out[i] = qpm_rescale(size, size, raw, p_max);
        }
    });
    return out;
}

std::vector<std::vector<double>> toy_class_templates(const ToyDatasetSpec& spec) {
    constexpr int kBlobsPerClass = 3;
    const std::uint64_t base = substream_seed(spec.class_template_seed, stream::kTemplates);
    const auto side = static_cast<double>(spec.size);
    std::vector<std::vector<double>> templates(spec.num_classes, std::vector<double>(spec.size * spec.size, 0.0));
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        Rng rng(substream_seed(base, c));
        auto& t = templates[c];
        for (int b = 0; b < kBlobsPerClass; ++b) {
            const double cy = rng.uniform(0.15, 0.85) * side;
            const double cx = rng.uniform(0.15, 0.85) * side;
            const double width = rng.uniform(0.06, 0.16) * side;
            const double amp = rng.uniform(0.5, 1.0);
            for (std::size_t r = 0; r < spec.size; ++r) {
                for (std::size_t col = 0; col < spec.size; ++col) {
                    const double dy = (static_cast<double>(r) + 0.5 - cy) / width;
                    const double dx = (static_cast<double>(col) + 0.5 - cx) / width;
                    t[r * spec.size + col] += amp * std::exp(-0.5 * (dy * dy + dx * dx));
                }
            }
        }
        for (double& v : t) {
            v = std::min(1.0, v);
        }
    }
    return templates;
}

ToyDataset gen_toy_dataset(const ToyDatasetSpec& spec) {
    if (spec.num_classes < 2 || spec.per_class < 1 || spec.size < 1) {
        throw Error(ErrorKind::InvalidArgument, "toy dataset needs >= 2 classes, >= 1 sample per class, size >= 1");
    }
    if (!(spec.template_contrast >= 0.0) || !std::isfinite(spec.template_contrast)) {
        throw Error(ErrorKind::InvalidArgument, "template_contrast must be finite and >= 0");
    }
    const auto templates = toy_class_templates(spec);
    const std::size_t total = spec.num_classes * spec.per_class;
    const std::size_t npix = spec.size * spec.size;
    const double p_max = (1.0 + spec.template_contrast) * default_p_max();
    const std::uint64_t base = substream_seed(spec.sample_seed, stream::kSamples);

    ToyDataset ds;
    ds.images.resize(total);
    ds.labels.labels.resize(total);
    parallel_for(total, [&](std::size_t begin, std::size_t end) {
        std::vector<double> raw(npix);
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t c = i % spec.num_classes;
            Rng rng(substream_seed(base, i));
            for (std::size_t p = 0; p < npix; ++p) {
                raw[p] = (1.0 + spec.template_contrast * templates[c][p]) * rng.rayleigh(1.0);
            }
            ds.images[i] = qpm_rescale(spec.size, spec.size, raw, p_max);
            ds.labels.labels[i] = static_cast<std::uint32_t>(c);
        }
    });
    return ds;
}

EmbeddingMatrix images_to_matrix(std::span<const Image> images, std::string source_id) {
    if (images.empty()) {
        throw Error(ErrorKind::EmptyInput, "no images to flatten");
    }
    const std::size_t h = images.front().height();
    const std::size_t w = images.front().width();
    std::vector<double> data;
    data.reserve(images.size() * h * w);
    for (const auto& img : images) {
        if (img.height() != h || img.width() != w) {
            throw Error(ErrorKind::ShapeMismatch, "images differ in shape");
        }
        data.insert(data.end(), img.pixels().begin(), img.pixels().end());
    }
    return EmbeddingMatrix(images.size(), h * w, std::move(data), std::move(source_id));
}

std::vector<Image> matrix_to_images(const EmbeddingMatrix& matrix, std::size_t height, std::size_t width) {
    if (height * width != matrix.dim()) {
        throw Error(ErrorKind::ShapeMismatch, "image shape does not match row length");
    }
    std::vector<Image> out;
    out.reserve(matrix.rows());
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        auto r = matrix.row(i);
        out.emplace_back(height, width, std::vector<double>(r.begin(), r.end()));
    }
    return out;
}

}  // namespace latent_audit

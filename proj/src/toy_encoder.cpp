#include "latent_audit/toy_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "latent_audit/error.hpp"
#include "latent_audit/eval_stats.hpp"
#include "latent_audit/parallel.hpp"
#include "latent_audit/rng.hpp"

namespace latent_audit {

namespace fs = std::filesystem;

void MlpArchitecture::validate() const {
    if (input_dim == 0 || num_classes == 0 || hidden_dims.empty()) {
        throw Error(ErrorKind::InvalidArgument, "architecture needs input_dim, num_classes and hidden_dims >= 1");
    }
    for (std::size_t h : hidden_dims) {
        if (h == 0) {
            throw Error(ErrorKind::InvalidArgument, "hidden dimensions must be >= 1");
        }
    }
    if (activation != "relu") {
        throw Error(ErrorKind::InvalidArgument, "unsupported activation '" + activation + "'");
    }
}

Mlp::Mlp(MlpArchitecture arch, std::vector<DenseLayer> layers) : arch_(std::move(arch)), layers_(std::move(layers)) {
    arch_.validate();
    if (layers_.size() != arch_.hidden_dims.size() + 1) {
        throw Error(ErrorKind::ShapeMismatch, "layer count does not match architecture");
    }
    std::size_t in = arch_.input_dim;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::size_t out = l < arch_.hidden_dims.size() ? arch_.hidden_dims[l] : arch_.num_classes;
        if (static_cast<std::size_t>(layers_[l].weight.rows()) != out ||
            static_cast<std::size_t>(layers_[l].weight.cols()) != in ||
            static_cast<std::size_t>(layers_[l].bias.size()) != out) {
            throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " has wrong shape");
        }
        if (!layers_[l].weight.allFinite() || !layers_[l].bias.allFinite()) {
            throw Error(ErrorKind::NonFinite, "layer " + std::to_string(l) + " has non-finite parameters");
        }
        in = out;
    }
}

Mlp Mlp::initialize(const MlpArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    const std::uint64_t base = substream_seed(seed, stream::kInit);
    std::vector<DenseLayer> layers;
    std::size_t in = arch.input_dim;
    const std::size_t count = arch.hidden_dims.size() + 1;
    for (std::size_t l = 0; l < count; ++l) {
        const std::size_t out = l < arch.hidden_dims.size() ? arch.hidden_dims[l] : arch.num_classes;
        Rng rng(substream_seed(base, l));
        const double limit = std::sqrt(6.0 / static_cast<double>(in));
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                layer.weight(r, c) = static_cast<double>(static_cast<float>(rng.uniform(-limit, limit)));
            }
        }
        layers.push_back(std::move(layer));
        in = out;
    }
    return Mlp(arch, std::move(layers));
}

namespace {

Batch affine(const Batch& x, const DenseLayer& layer) {
    Batch z = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

void require_input(const Batch& inputs, std::size_t input_dim) {
    if (static_cast<std::size_t>(inputs.cols()) != input_dim) {
        throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(inputs.cols()) +
                                                  " features, model expects " + std::to_string(input_dim));
    }
}

}  // namespace

Batch Mlp::latent(const Batch& inputs) const {
    require_input(inputs, arch_.input_dim);
    Batch h = inputs;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        h = affine(h, layers_[l]).cwiseMax(0.0);
    }
    return h;
}

Batch Mlp::logits(const Batch& inputs) const { return affine(latent(inputs), layers_.back()); }

Batch softmax(const Batch& logits) {
    Batch out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - m).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

Mlp::LossAndGradient Mlp::loss_and_gradient(const Batch& inputs, std::span<const std::uint32_t> labels,
                                            std::span<const double> class_weights) const {
    require_input(inputs, arch_.input_dim);
    const auto batch = static_cast<std::size_t>(inputs.rows());
    if (labels.size() != batch || batch == 0) {
        throw Error(ErrorKind::ShapeMismatch, "labels do not match batch size");
    }
    // Forward, keeping every layer's activations.
    std::vector<Batch> acts;
    acts.reserve(layers_.size() + 1);
    acts.push_back(inputs);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        acts.push_back(affine(acts.back(), layers_[l]).cwiseMax(0.0));
    }
    const Batch z = affine(acts.back(), layers_.back());
    const Batch probs = softmax(z);

    LossAndGradient out;
    Batch delta = probs;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const std::uint32_t y = labels[i];
        if (y >= arch_.num_classes || y >= class_weights.size()) {
            throw Error(ErrorKind::ShapeMismatch, "label " + std::to_string(y) + " out of range");
        }
        const auto row = static_cast<Eigen::Index>(i);
        const double w = class_weights[y];
        // log-softmax directly from the logits for accuracy.
        const double m = z.row(row).maxCoeff();
        const double lse = m + std::log((z.row(row).array() - m).exp().sum());
        out.loss += w * (lse - z(row, y));
        delta(row, y) -= 1.0;
        delta.row(row) *= w * inv_batch;
    }
    out.loss *= inv_batch;

    out.gradient.resize(layers_.size());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        out.gradient[l].weight = delta.transpose() * acts[l];
        out.gradient[l].bias = delta.colwise().sum().transpose();
        if (l > 0) {
            Batch back = delta * layers_[l].weight;
            delta = (acts[l].array() > 0.0).select(back, 0.0);
        }
    }
    return out;
}

double Mlp::loss(const Batch& inputs, std::span<const std::uint32_t> labels,
                 std::span<const double> class_weights) const {
    const Batch z = logits(inputs);
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const std::uint32_t y = labels[static_cast<std::size_t>(i)];
        const double m = z.row(i).maxCoeff();
        const double lse = m + std::log((z.row(i).array() - m).exp().sum());
        total += class_weights[y] * (lse - z(i, y));
    }
    return total / static_cast<double>(z.rows());
}

void Mlp::round_to_storage() {
    for (auto& layer : layers_) {
        layer.weight = layer.weight.cast<float>().cast<double>();
        layer.bias = layer.bias.cast<float>().cast<double>();
    }
}

bool Mlp::operator==(const Mlp& other) const {
    if (layers_.size() != other.layers_.size() || arch_.hidden_dims != other.arch_.hidden_dims ||
        arch_.input_dim != other.arch_.input_dim || arch_.num_classes != other.arch_.num_classes) {
        return false;
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].weight != other.layers_[l].weight || layers_[l].bias != other.layers_[l].bias) {
            return false;
        }
    }
    return true;
}

std::uint32_t argmax_lowest(std::span<const double> values) {
    std::uint32_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = static_cast<std::uint32_t>(i);
        }
    }
    return best;
}

std::vector<double> class_weights(const LabelVector& labels, std::size_t num_classes) {
    const std::size_t classes = num_classes ? num_classes : labels.num_classes();
    if (labels.size() == 0 || classes == 0) {
        throw Error(ErrorKind::EmptyInput, "no labels");
    }
    const auto counts = class_counts(labels, classes);
    std::vector<double> weights(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0) {
            throw Error(ErrorKind::EmptyClass, "class " + std::to_string(c) + " has no samples");
        }
        weights[c] = static_cast<double>(labels.size()) /
                     (static_cast<double>(classes) * static_cast<double>(counts[c]));
    }
    return weights;
}

Batch images_to_batch(std::span<const Image> images) {
    if (images.empty()) {
        return Batch(0, 0);
    }
    const auto d = static_cast<Eigen::Index>(images.front().size());
    Batch x(static_cast<Eigen::Index>(images.size()), d);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (static_cast<Eigen::Index>(images[i].size()) != d) {
            throw Error(ErrorKind::ShapeMismatch, "images differ in size");
        }
        const auto px = images[i].pixels();
        for (Eigen::Index j = 0; j < d; ++j) {
            x(static_cast<Eigen::Index>(i), j) = px[static_cast<std::size_t>(j)];
        }
    }
    return x;
}

namespace {

LabelVector predict_batch(const Mlp& model, const Batch& x) {
    LabelVector out;
    if (x.rows() == 0) {
        return out;
    }
    const Batch z = model.logits(x);
    out.labels.resize(static_cast<std::size_t>(z.rows()));
    std::vector<double> row(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            row[static_cast<std::size_t>(j)] = z(i, j);
        }
        out.labels[static_cast<std::size_t>(i)] = argmax_lowest(row);
    }
    return out;
}

EmbeddingMatrix latent_batch(const Mlp& model, const Batch& x) {
    const std::size_t latent = model.architecture().latent_dim();
    if (x.rows() == 0) {
        return EmbeddingMatrix(0, latent, {});
    }
    const Batch h = model.latent(x);
    std::vector<double> data(static_cast<std::size_t>(h.rows()) * latent);
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            data[static_cast<std::size_t>(i) * latent + static_cast<std::size_t>(j)] = h(i, j);
        }
    }
    return EmbeddingMatrix(static_cast<std::size_t>(h.rows()), latent, std::move(data));
}

Batch matrix_to_batch(const EmbeddingMatrix& m) {
    Batch x(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.dim()));
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.dim(); ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
        }
    }
    return x;
}

void check_image_input(const Mlp& model, std::span<const Image> images) {
    for (const auto& img : images) {
        if (img.size() != model.architecture().input_dim) {
            throw Error(ErrorKind::ShapeMismatch, "image has " + std::to_string(img.size()) +
                                                      " pixels, model expects " +
                                                      std::to_string(model.architecture().input_dim));
        }
    }
}

}  // namespace

TrainedInstance train_instance(std::span<const Image> train_images, const LabelVector& train_labels,
                               const MlpArchitecture& arch, const TrainConfig& config,
                               std::span<const Image> val_images, const LabelVector& val_labels) {
    arch.validate();
    if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate >= 0.0) ||
        !(config.sigma_noise >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "epochs and batch_size must be >= 1, learning_rate and sigma_noise >= 0");
    }
    const std::size_t n = train_images.size();
    if (n == 0 || train_labels.size() != n) {
        throw Error(ErrorKind::ShapeMismatch, "training images and labels must be non-empty and equal in length");
    }
    if (val_images.empty() || val_labels.size() != val_images.size()) {
        throw Error(ErrorKind::ShapeMismatch, "validation images and labels must be non-empty and equal in length");
    }
    for (const auto& img : train_images) {
        if (img.size() != arch.input_dim) {
            throw Error(ErrorKind::ShapeMismatch, "training image size does not match input_dim");
        }
    }
    for (std::uint32_t y : train_labels.labels) {
        if (y >= arch.num_classes) {
            throw Error(ErrorKind::ShapeMismatch, "training label exceeds num_classes");
        }
    }

    const auto weights = class_weights(train_labels, arch.num_classes);
    TrainedInstance result;
    result.seed = config.seed;
    result.model = Mlp::initialize(arch, config.seed);
    auto& layers = result.model.layers();

    std::vector<DenseLayer> m1(layers.size()), m2(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        m1[l] = {Eigen::MatrixXd::Zero(layers[l].weight.rows(), layers[l].weight.cols()),
                 Eigen::VectorXd::Zero(layers[l].bias.size())};
        m2[l] = m1[l];
    }

    const std::uint64_t shuffle_base = substream_seed(config.seed, stream::kShuffle);
    const std::uint64_t augment_base = substream_seed(config.seed, stream::kAugment);
    std::vector<std::size_t> order(n);
    std::vector<std::uint32_t> batch_labels;
    std::size_t step = 0;
    const auto d = static_cast<Eigen::Index>(arch.input_dim);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(substream_seed(shuffle_base, epoch));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.below(i)]);
        }
        const std::uint64_t epoch_aug = substream_seed(augment_base, epoch);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            Batch x(static_cast<Eigen::Index>(end - start), d);
            batch_labels.resize(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t idx = order[b];
                const Image aug =
                    augment_image(train_images[idx], {config.sigma_noise, substream_seed(epoch_aug, idx)});
                const auto px = aug.pixels();
                for (Eigen::Index j = 0; j < d; ++j) {
                    x(static_cast<Eigen::Index>(b - start), j) = px[static_cast<std::size_t>(j)];
                }
                batch_labels[b - start] = train_labels.labels[idx];
            }

            auto lg = result.model.loss_and_gradient(x, batch_labels, weights);
            if (!std::isfinite(lg.loss)) {
                throw Error(ErrorKind::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch));
            }
            epoch_loss += lg.loss * static_cast<double>(end - start);

            ++step;
            const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
            auto adam = [&](auto& param, auto& grad, auto& m, auto& v) {
                m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * grad;
                v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
                param.array() -= config.learning_rate * (m.array() / bc1) /
                                 ((v.array() / bc2).sqrt() + config.adam_eps);
            };
            for (std::size_t l = 0; l < layers.size(); ++l) {
                adam(layers[l].weight, lg.gradient[l].weight, m1[l].weight, m2[l].weight);
                adam(layers[l].bias, lg.gradient[l].bias, m1[l].bias, m2[l].bias);
            }
        }
        result.train_log.push_back(epoch_loss / static_cast<double>(n));
    }

    result.model.round_to_storage();
    check_image_input(result.model, val_images);
    const auto val_pred = predict_batch(result.model, images_to_batch(val_images));
    result.val_accuracy = mean_class_accuracy(val_labels, val_pred);
    return result;
}

std::vector<TrainedInstance> train_ensemble(std::span<const Image> train_images,
                                            const LabelVector& train_labels, const MlpArchitecture& arch,
                                            const TrainConfig& config, std::span<const Image> val_images,
                                            const LabelVector& val_labels, std::size_t num_instances,
                                            std::uint64_t base_seed) {
    if (num_instances < 1) {
        throw Error(ErrorKind::InvalidArgument, "num_instances must be >= 1");
    }
    std::vector<TrainedInstance> out(num_instances);
    parallel_for(num_instances, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            TrainConfig cfg = config;
            cfg.seed = base_seed + i;
            out[i] = train_instance(train_images, train_labels, arch, cfg, val_images, val_labels);
        }
    });
    return out;
}

EmbeddingMatrix extract_latent(const TrainedInstance& instance, std::span<const Image> images) {
    check_image_input(instance.model, images);
    return latent_batch(instance.model, images_to_batch(images));
}

LabelVector predict(const TrainedInstance& instance, std::span<const Image> images) {
    check_image_input(instance.model, images);
    return predict_batch(instance.model, images_to_batch(images));
}

EmbeddingMatrix extract_latent(const Mlp& model, const EmbeddingMatrix& inputs) {
    if (inputs.dim() != model.architecture().input_dim) {
        throw Error(ErrorKind::ShapeMismatch, "input dimension does not match model");
    }
    return latent_batch(model, matrix_to_batch(inputs));
}

LabelVector predict(const Mlp& model, const EmbeddingMatrix& inputs) {
    if (inputs.dim() != model.architecture().input_dim) {
        throw Error(ErrorKind::ShapeMismatch, "input dimension does not match model");
    }
    return predict_batch(model, matrix_to_batch(inputs));
}

fs::path save_instance(const TrainedInstance& instance, const fs::path& stem) {
    const auto& model = instance.model;
    const auto& arch = model.architecture();
    nlohmann::ordered_json j;
    j["architecture"] = {{"input_dim", arch.input_dim},
                         {"hidden_dims", arch.hidden_dims},
                         {"num_classes", arch.num_classes},
                         {"activation", arch.activation}};
    j["seed"] = instance.seed;
    j["val_accuracy"] = instance.val_accuracy;
    j["train_log"] = instance.train_log;
    auto layers = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& layer = model.layers()[l];
        const std::string prefix = stem.filename().string() + ".layer" + std::to_string(l);
        const fs::path wpath = stem.parent_path() / (prefix + ".weight.emb");
        const fs::path bpath = stem.parent_path() / (prefix + ".bias.emb");
        std::vector<double> w(static_cast<std::size_t>(layer.weight.size()));
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                w[static_cast<std::size_t>(r * layer.weight.cols() + c)] = layer.weight(r, c);
            }
        }
        write_embeddings(EmbeddingMatrix(static_cast<std::size_t>(layer.weight.rows()),
                                         static_cast<std::size_t>(layer.weight.cols()), std::move(w)),
                         wpath);
        std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
        const std::size_t bias_dim = b.size();
        write_embeddings(EmbeddingMatrix(1, bias_dim, std::move(b)), bpath);
        layers.push_back({{"weight", wpath.filename().string()}, {"bias", bpath.filename().string()}});
    }
    j["layers"] = layers;
    const fs::path json_path = fs::path(stem.string() + ".model.json");
    const std::string text = j.dump(2) + "\n";
    write_file_bytes(json_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return json_path;
}

TrainedInstance load_instance(const fs::path& model_json) {
    const auto bytes = read_file_bytes(model_json);
    TrainedInstance inst;
    try {
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
        MlpArchitecture arch;
        const auto& a = j.at("architecture");
        arch.input_dim = a.at("input_dim").get<std::size_t>();
        arch.hidden_dims = a.at("hidden_dims").get<std::vector<std::size_t>>();
        arch.num_classes = a.at("num_classes").get<std::size_t>();
        arch.activation = a.value("activation", std::string("relu"));
        std::vector<DenseLayer> layers;
        for (const auto& entry : j.at("layers")) {
            const auto w = read_embeddings(model_json.parent_path() / entry.at("weight").get<std::string>());
            const auto b = read_embeddings(model_json.parent_path() / entry.at("bias").get<std::string>());
            DenseLayer layer{Eigen::MatrixXd(static_cast<Eigen::Index>(w.rows()), static_cast<Eigen::Index>(w.dim())),
                             Eigen::VectorXd(static_cast<Eigen::Index>(b.dim()))};
            for (std::size_t r = 0; r < w.rows(); ++r) {
                for (std::size_t c = 0; c < w.dim(); ++c) {
                    layer.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w(r, c);
                }
            }
            for (std::size_t c = 0; c < b.dim(); ++c) {
                layer.bias(static_cast<Eigen::Index>(c)) = b(0, c);
            }
            layers.push_back(std::move(layer));
        }
        inst.model = Mlp(std::move(arch), std::move(layers));
        inst.seed = j.at("seed").get<std::uint64_t>();
        inst.val_accuracy = j.at("val_accuracy").get<double>();
        inst.train_log = j.value("train_log", std::vector<double>{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "model " + model_json.string() + ": " + e.what());
    }
    return inst;
}

}  // namespace latent_audit

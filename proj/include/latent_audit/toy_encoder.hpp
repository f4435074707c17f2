#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latent_audit/embedding_store.hpp"
#include "latent_audit/synth_data.hpp"

namespace latent_audit {

struct MlpArchitecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims{128, 64};  // last entry is the latent dimension
    std::size_t num_classes = 0;
    std::string activation = "relu";

    std::size_t latent_dim() const { return hidden_dims.back(); }
    /// Throws `InvalidArgument` unless every dimension is >= 1 and the
    /// activation is "relu".
    void validate() const;
};

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    double sigma_noise = 0.0;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

/// Fully connected layer computing x W^T + b.
struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

/// Rows are samples.
using Batch = Eigen::MatrixXd;

/// ReLU hidden stack followed by a linear output layer.
class Mlp {
public:
    Mlp() = default;
    Mlp(MlpArchitecture arch, std::vector<DenseLayer> layers);

    /// He-uniform weights U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)) and zero
    /// biases, drawn layer by layer from the init substream of `seed` and
    /// rounded to float32 so that saved models reload bit-exactly.
    static Mlp initialize(const MlpArchitecture& arch, std::uint64_t seed);

    const MlpArchitecture& architecture() const noexcept { return arch_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }

    /// Activations of the last hidden layer.
    Batch latent(const Batch& inputs) const;
    Batch logits(const Batch& inputs) const;

    struct LossAndGradient {
        double loss = 0.0;
        std::vector<DenseLayer> gradient;  // same shapes as layers()
    };

    /// Class-weighted softmax cross-entropy, sum_i w[y_i] * CE_i / batch_size,
    /// with its gradient for every parameter.
    LossAndGradient loss_and_gradient(const Batch& inputs, std::span<const std::uint32_t> labels,
                                      std::span<const double> class_weights) const;

    double loss(const Batch& inputs, std::span<const std::uint32_t> labels,
                std::span<const double> class_weights) const;

    /// Rounds every parameter to float32 (the on-disk precision).
    void round_to_storage();

    bool operator==(const Mlp& other) const;

private:
    MlpArchitecture arch_;
    std::vector<DenseLayer> layers_;
};

/// Row-wise numerically stable softmax.
Batch softmax(const Batch& logits);

/// Index of the largest entry; ties go to the lowest index.
std::uint32_t argmax_lowest(std::span<const double> values);

struct TrainedInstance {
    Mlp model;
    std::uint64_t seed = 0;
    double val_accuracy = 0.0;        // mean class accuracy on the validation set
    std::vector<double> train_log;    // mean training loss per epoch
};

/// n / (C * n_c) for each class c < labels.num_classes(); `EmptyClass` when
/// some class has no samples. Pass `num_classes` to override C.
std::vector<double> class_weights(const LabelVector& labels, std::size_t num_classes = 0);

/// Mini-batch Adam on the class-weighted loss. Every epoch reshuffles from
/// the shuffle substream and re-augments each sample with fresh noise drawn
/// from substream (epoch, sample index) of the augment substream. Final
/// weights are rounded to float32 before validation.
TrainedInstance train_instance(std::span<const Image> train_images, const LabelVector& train_labels,
                               const MlpArchitecture& arch, const TrainConfig& config,
                               std::span<const Image> val_images, const LabelVector& val_labels);

/// Instance i trains with seed base_seed + i; instances run in parallel.
std::vector<TrainedInstance> train_ensemble(std::span<const Image> train_images,
                                            const LabelVector& train_labels, const MlpArchitecture& arch,
                                            const TrainConfig& config, std::span<const Image> val_images,
                                            const LabelVector& val_labels, std::size_t num_instances,
                                            std::uint64_t base_seed);

Batch images_to_batch(std::span<const Image> images);

EmbeddingMatrix extract_latent(const TrainedInstance& instance, std::span<const Image> images);
LabelVector predict(const TrainedInstance& instance, std::span<const Image> images);

/// Matrix-input variants used by the CLI (rows are flattened images).
EmbeddingMatrix extract_latent(const Mlp& model, const EmbeddingMatrix& inputs);
LabelVector predict(const Mlp& model, const EmbeddingMatrix& inputs);

/// `<stem>.model.json` plus one `.emb` blob per weight and bias
/// (`<stem>.layer<i>.weight.emb`, out x in; `<stem>.layer<i>.bias.emb`, 1 x out).
std::filesystem::path save_instance(const TrainedInstance& instance, const std::filesystem::path& stem);
TrainedInstance load_instance(const std::filesystem::path& model_json);

}  // namespace latent_audit

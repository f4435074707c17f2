#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace latent_audit {

/// Row-major n x d matrix of latent activations (or flattened images).
///
/// Values are held in double precision in memory and stored as little-endian
/// float32 on disk. Every value is finite; construction rejects NaN/Inf with
/// `NonFinite`. A zero-row matrix is representable (an empty batch) but every
/// matrix has `dim() >= 1`.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                    std::string source_id = {});

    static EmbeddingMatrix zeros(std::size_t rows, std::size_t dim, std::string source_id = {});

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

    std::span<const double> data() const noexcept { return data_; }
    const std::string& source_id() const noexcept { return source_id_; }
    void set_source_id(std::string id) { source_id_ = std::move(id); }

    /// Copy of the selected rows, in the given order.
    EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

    bool operator==(const EmbeddingMatrix& other) const {
        return rows_ == other.rows_ && dim_ == other.dim_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
    std::string source_id_;
};

struct LabelVector {
    std::vector<std::uint32_t> labels;
    std::vector<std::string> class_names;  // empty when unnamed

    std::size_t size() const noexcept { return labels.size(); }
    /// max label + 1, or class_names.size() when names are present.
    std::size_t num_classes() const;
    bool operator==(const LabelVector& other) const { return labels == other.labels; }
};

struct DatasetManifest {
    std::string name;
    std::filesystem::path embeddings_path;
    std::optional<std::filesystem::path> labels_path;
    std::optional<std::filesystem::path> predictions_path;
    std::string model_id;
    std::int64_t seed = 0;
    std::string notes;
    /// Height and width when the embeddings are flattened images.
    std::optional<std::pair<std::size_t, std::size_t>> image_shape;
};

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

void write_labels(const LabelVector& labels, const std::filesystem::path& path);
LabelVector read_labels(const std::filesystem::path& path);

/// In-memory codecs for the same byte layouts the file functions use.
std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes, std::string source_id = {});
std::vector<std::uint8_t> encode_labels(const LabelVector& labels);
LabelVector decode_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Relative paths inside a manifest are stored relative to the manifest's
/// directory; `read_manifest` returns them resolved.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loaded contents of a manifest, with row counts cross-checked.
struct Dataset {
    DatasetManifest manifest;
    EmbeddingMatrix embeddings;
    std::optional<LabelVector> labels;
    std::optional<LabelVector> predictions;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace latent_audit

#include "latent_audit/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "json.hpp"

#include "latent_audit/error.hpp"

namespace latent_audit {

namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kEmbMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint8_t kLblMagic[4] = {'L', 'B', 'L', '1'};
constexpr std::size_t kHeaderBytes = 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFFu));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
    }
    return v;
}

void check_magic(std::span<const std::uint8_t> bytes, const std::uint8_t (&magic)[4]) {
    if (bytes.size() < kHeaderBytes || !std::equal(magic, magic + 4, bytes.begin())) {
        throw Error(ErrorKind::BadMagic, "unexpected file magic");
    }
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " exceeds u32 range");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                                 std::string source_id)
    : rows_(rows), dim_(dim), data_(std::move(data)), source_id_(std::move(source_id)) {
    if (dim_ == 0) {
        throw Error(ErrorKind::ShapeMismatch, "embedding dimension must be >= 1");
    }
    if (data_.size() != rows_ * dim_) {
        throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                                  " != rows*dim " + std::to_string(rows_ * dim_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw Error(ErrorKind::NonFinite, "row " + std::to_string(i / dim_) + ", col " +
                                                  std::to_string(i % dim_));
        }
    }
}

EmbeddingMatrix EmbeddingMatrix::zeros(std::size_t rows, std::size_t dim, std::string source_id) {
    return EmbeddingMatrix(rows, dim, std::vector<double>(rows * dim, 0.0), std::move(source_id));
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * dim_);
    for (std::size_t idx : indices) {
        if (idx >= rows_) {
            throw Error(ErrorKind::InvalidArgument, "row index out of range");
        }
        auto r = row(idx);
        out.insert(out.end(), r.begin(), r.end());
    }
    return EmbeddingMatrix(indices.size(), dim_, std::move(out), source_id_);
}

std::size_t LabelVector::num_classes() const {
    if (!class_names.empty()) {
        return class_names.size();
    }
    if (labels.empty()) {
        return 0;
    }
    return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& matrix) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + matrix.data().size() * 4);
    out.insert(out.end(), std::begin(kEmbMagic), std::end(kEmbMagic));
    put_u32(out, checked_u32(matrix.rows(), "row count"));
    put_u32(out, checked_u32(matrix.dim(), "dimension"));
    const auto data = matrix.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto f = static_cast<float>(data[i]);
        // Finite doubles beyond float range overflow to infinity here.
        if (!std::isfinite(f)) {
            throw Error(ErrorKind::NonFinite, "row " + std::to_string(i / matrix.dim()) +
                                                  ", col " + std::to_string(i % matrix.dim()) +
                                                  " does not fit float32");
        }
        put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes, std::string source_id) {
    check_magic(bytes, kEmbMagic);
    if (bytes.size() < 12) {
        throw Error(ErrorKind::Truncated, "header shorter than 12 bytes");
    }
    const std::size_t n = get_u32(bytes, 4);
    const std::size_t d = get_u32(bytes, 8);
    if (d == 0) {
        throw Error(ErrorKind::ShapeMismatch, "embedding dimension is 0");
    }
    const std::size_t payload = bytes.size() - 12;
    if (payload / 4 / d < n || payload < n * d * 4) {
        throw Error(ErrorKind::Truncated, "declared " + std::to_string(n) + "x" +
                                              std::to_string(d) + " but payload has " +
                                              std::to_string(payload) + " bytes");
    }
    std::vector<double> data(n * d);
    for (std::size_t i = 0; i < n * d; ++i) {
        const float f = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
        if (!std::isfinite(f)) {
            throw Error(ErrorKind::NonFinite,
                        "row " + std::to_string(i / d) + ", col " + std::to_string(i % d));
        }
        data[i] = f;
    }
    return EmbeddingMatrix(n, d, std::move(data), std::move(source_id));
}

std::vector<std::uint8_t> encode_labels(const LabelVector& labels) {
    const std::size_t classes = labels.class_names.size();
    std::vector<std::uint8_t> out;
    out.reserve(8 + 4 * labels.size());
    out.insert(out.end(), std::begin(kLblMagic), std::end(kLblMagic));
    put_u32(out, checked_u32(labels.size(), "label count"));
    for (std::uint32_t id : labels.labels) {
        if (classes != 0 && id >= classes) {
            throw Error(ErrorKind::InvalidArgument, "label id " + std::to_string(id) +
                                                        " >= class count " +
                                                        std::to_string(classes));
        }
        put_u32(out, id);
    }
    return out;
}

LabelVector decode_labels(std::span<const std::uint8_t> bytes) {
    check_magic(bytes, kLblMagic);
    if (bytes.size() < 8) {
        throw Error(ErrorKind::Truncated, "header shorter than 8 bytes");
    }
    const std::size_t n = get_u32(bytes, 4);
    if ((bytes.size() - 8) / 4 < n) {
        throw Error(ErrorKind::Truncated, "declared " + std::to_string(n) + " labels but payload has " +
                                              std::to_string(bytes.size() - 8) + " bytes");
    }
    LabelVector out;
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.labels[i] = get_u32(bytes, 8 + 4 * i);
    }
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw Error(ErrorKind::Io, "read failed for " + path.string());
    }
    return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorKind::Io, "write failed for " + path.string());
    }
}

void write_embeddings(const EmbeddingMatrix& matrix, const fs::path& path) {
    write_file_bytes(path, encode_embeddings(matrix));
}

EmbeddingMatrix read_embeddings(const fs::path& path) {
    return decode_embeddings(read_file_bytes(path), path.string());
}

void write_labels(const LabelVector& labels, const fs::path& path) {
    write_file_bytes(path, encode_labels(labels));
}

LabelVector read_labels(const fs::path& path) { return decode_labels(read_file_bytes(path)); }

namespace {

std::string relative_to(const fs::path& target, const fs::path& base_dir) {
    if (target.is_relative()) {
        return target.generic_string();
    }
    auto rel = target.lexically_relative(base_dir);
    return rel.empty() ? target.generic_string() : rel.generic_string();
}

fs::path resolve(const std::string& stored, const fs::path& base_dir) {
    fs::path p(stored);
    return p.is_relative() ? (base_dir / p).lexically_normal() : p;
}

}  // namespace

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    const fs::path base = path.parent_path();
    nlohmann::ordered_json j;
    j["name"] = manifest.name;
    j["embeddings_path"] = relative_to(manifest.embeddings_path, base);
    j["labels_path"] = manifest.labels_path ? nlohmann::ordered_json(relative_to(*manifest.labels_path, base))
                                            : nlohmann::ordered_json(nullptr);
    j["predictions_path"] = manifest.predictions_path
                                ? nlohmann::ordered_json(relative_to(*manifest.predictions_path, base))
                                : nlohmann::ordered_json(nullptr);
    j["model_id"] = manifest.model_id;
    j["seed"] = manifest.seed;
    j["notes"] = manifest.notes;
    if (manifest.image_shape) {
        j["image_shape"] = {manifest.image_shape->first, manifest.image_shape->second};
    }
    const std::string text = j.dump(2) + "\n";
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest read_manifest(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "manifest " + path.string() + ": " + e.what());
    }
    const fs::path base = path.parent_path();
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.embeddings_path = resolve(j.at("embeddings_path").get<std::string>(), base);
        if (j.contains("labels_path") && !j["labels_path"].is_null()) {
            m.labels_path = resolve(j["labels_path"].get<std::string>(), base);
        }
        if (j.contains("predictions_path") && !j["predictions_path"].is_null()) {
            m.predictions_path = resolve(j["predictions_path"].get<std::string>(), base);
        }
        m.model_id = j.value("model_id", std::string{});
        m.seed = j.value("seed", std::int64_t{0});
        m.notes = j.value("notes", std::string{});
        if (j.contains("image_shape")) {
            const auto& s = j["image_shape"];
            m.image_shape = std::make_pair(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "manifest " + path.string() + ": " + e.what());
    }
    return m;
}

Dataset load_dataset(const fs::path& manifest_path) {
    Dataset ds;
    ds.manifest = read_manifest(manifest_path);
    ds.embeddings = read_embeddings(ds.manifest.embeddings_path);
    const std::size_t n = ds.embeddings.rows();
    auto load_lbl = [&](const fs::path& p, const char* role) {
        LabelVector v = read_labels(p);
        if (v.size() != n) {
            throw Error(ErrorKind::LengthMismatch, std::string(role) + " file " + p.string() + " has " +
                                                       std::to_string(v.size()) + " entries, embeddings have " +
                                                       std::to_string(n));
        }
        return v;
    };
    if (ds.manifest.labels_path) {
        ds.labels = load_lbl(*ds.manifest.labels_path, "labels");
    }
    if (ds.manifest.predictions_path) {
        ds.predictions = load_lbl(*ds.manifest.predictions_path, "predictions");
    }
    if (ds.manifest.image_shape) {
        const auto [h, w] = *ds.manifest.image_shape;
        if (h * w != ds.embeddings.dim()) {
            throw Error(ErrorKind::ShapeMismatch, "image_shape does not match embedding dimension");
        }
    }
    return ds;
}

}  // namespace latent_audit

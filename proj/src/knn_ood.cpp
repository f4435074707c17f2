#include "latent_audit/knn_ood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "latent_audit/digest.hpp"
#include "latent_audit/error.hpp"
#include "latent_audit/parallel.hpp"

namespace latent_audit {

namespace fs = std::filesystem;

namespace {

double row_norm(std::span<const double> row) {
    double s = 0.0;
    for (double v : row) {
        s += v * v;
    }
    return std::sqrt(s);
}

void normalize_into(std::span<const double> in, std::span<double> out, std::size_t row_index) {
    const double norm = row_norm(in);
    if (!(norm >= kMinRowNorm)) {
        throw Error(ErrorKind::ZeroVector, "row " + std::to_string(row_index) + " has norm " +
                                               std::to_string(norm));
    }
    for (std::size_t j = 0; j < in.size(); ++j) {
        out[j] = in[j] / norm;
    }
}

void canonicalize_into(std::span<const double> in, std::span<double> out, std::size_t row_index) {
    normalize_into(in, out, row_index);
    for (double& v : out) {
        v = static_cast<double>(static_cast<float>(v));
    }
    // A unit vector rounded to float32 keeps norm ~1, so this cannot fail.
    normalize_into(std::vector<double>(out.begin(), out.end()), out, row_index);
}

void require_dims(std::size_t query_dim, std::size_t ref_dim) {
    if (query_dim != ref_dim) {
        throw Error(ErrorKind::DimensionMismatch, "query dimension " + std::to_string(query_dim) +
                                                      " != reference dimension " +
                                                      std::to_string(ref_dim));
    }
}

/// Sorted `kmax` smallest squared distances from query to the reference rows
/// (skipping `exclude`), written to the front of `scratch`.
std::span<const double> smallest_squared(std::span<const double> query, const EmbeddingMatrix& reference,
                                         std::size_t kmax, std::optional<std::size_t> exclude,
                                         std::vector<double>& scratch) {
    const std::size_t n = reference.rows();
    scratch.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        scratch[r] = squared_distance(query, reference.row(r));
    }
    if (exclude) {
        scratch[*exclude] = scratch.back();
        scratch.pop_back();
    }
    auto kth = scratch.begin() + static_cast<std::ptrdiff_t>(kmax - 1);
    std::nth_element(scratch.begin(), kth, scratch.end());
    std::sort(scratch.begin(), kth + 1);
    return {scratch.data(), kmax};
}

void validate_ks(std::span<const std::size_t> ks, std::size_t available) {
    if (ks.empty()) {
        throw Error(ErrorKind::InvalidArgument, "no k values given");
    }
    for (std::size_t k : ks) {
        if (k == 0) {
            throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
        }
        if (k > available) {
            throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " but only " +
                                                  std::to_string(available) + " neighbors available");
        }
    }
}

}  // namespace

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& matrix) {
    std::vector<double> out(matrix.rows() * matrix.dim());
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        normalize_into(matrix.row(i), std::span(out).subspan(i * matrix.dim(), matrix.dim()), i);
    }
    return EmbeddingMatrix(matrix.rows(), matrix.dim(), std::move(out), matrix.source_id());
}

EmbeddingMatrix canonical_unit_rows(const EmbeddingMatrix& matrix) {
    std::vector<double> out(matrix.rows() * matrix.dim());
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        canonicalize_into(matrix.row(i), std::span(out).subspan(i * matrix.dim(), matrix.dim()), i);
    }
    return EmbeddingMatrix(matrix.rows(), matrix.dim(), std::move(out), matrix.source_id());
}

std::vector<double> canonical_unit_vector(std::span<const double> raw) {
    std::vector<double> out(raw.size());
    canonicalize_into(raw, out, 0);
    return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    const std::size_t d = a.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        const double t0 = pa[i] - pb[i];
        const double t1 = pa[i + 1] - pb[i + 1];
        const double t2 = pa[i + 2] - pb[i + 2];
        const double t3 = pa[i + 3] - pb[i + 3];
        s0 += t0 * t0;
        s1 += t1 * t1;
        s2 += t2 * t2;
        s3 += t3 * t3;
    }
    for (; i < d; ++i) {
        const double t = pa[i] - pb[i];
        s0 += t * t;
    }
    return (s0 + s1) + (s2 + s3);
}

double kth_nn_distance(std::span<const double> query, const EmbeddingMatrix& reference, std::size_t k,
                       std::optional<std::size_t> exclude_index) {
    require_dims(query.size(), reference.dim());
    if (exclude_index && *exclude_index >= reference.rows()) {
        throw Error(ErrorKind::InvalidArgument, "exclude_index out of range");
    }
    const std::size_t available = reference.rows() - (exclude_index ? 1 : 0);
    const std::size_t ks[] = {k};
    validate_ks(ks, available);
    std::vector<double> scratch;
    return std::sqrt(smallest_squared(query, reference, k, exclude_index, scratch)[k - 1]);
}

std::size_t threshold_rank(std::size_t n, double alpha) {
    // The small offset absorbs representation error, e.g. (1 - 0.01) * 10000
    // evaluating a hair below 9900.
    const double v = (1.0 - alpha) * static_cast<double>(n);
    return static_cast<std::size_t>(std::floor(v + 1e-9 * std::max(1.0, v)));
}

std::vector<CalibratedDetector> calibrate_many(const EmbeddingMatrix& reference,
                                               std::span<const std::size_t> ks, double alpha,
                                               bool exclude_self) {
    const std::size_t n = reference.rows();
    if (n == 0) {
        throw Error(ErrorKind::EmptyInput, "reference set is empty");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
    }
    validate_ks(ks, exclude_self ? n - 1 : n);
    const std::size_t rank = threshold_rank(n, alpha);
    if (rank < 1) {
        throw Error(ErrorKind::AlphaDegenerate, "floor((1 - alpha) * n) = 0 for n=" + std::to_string(n));
    }

    EmbeddingMatrix unit = canonical_unit_rows(reference);
    const std::size_t kmax = *std::max_element(ks.begin(), ks.end());

    std::vector<std::vector<double>> dists(ks.size(), std::vector<double>(n));
    parallel_for(
        n,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> scratch;
            for (std::size_t i = begin; i < end; ++i) {
                auto nearest = smallest_squared(unit.row(i), unit, kmax,
                                                exclude_self ? std::optional(i) : std::nullopt, scratch);
                for (std::size_t j = 0; j < ks.size(); ++j) {
                    dists[j][i] = std::sqrt(nearest[ks[j] - 1]);
                }
            }
        },
        16);

    const std::string hash = sha256_hex(encode_embeddings(unit));
    std::vector<CalibratedDetector> out;
    out.reserve(ks.size());
    for (std::size_t j = 0; j < ks.size(); ++j) {
        CalibratedDetector det;
        std::sort(dists[j].begin(), dists[j].end());
        det.threshold_ = dists[j][rank - 1];
        det.sorted_distances_ = std::move(dists[j]);
        det.reference_ = unit;
        det.k_ = ks[j];
        det.alpha_ = alpha;
        det.exclude_self_ = exclude_self;
        det.rank_ = rank;
        det.reference_hash_ = hash;
        out.push_back(std::move(det));
    }
    return out;
}

CalibratedDetector calibrate(const EmbeddingMatrix& reference, const DetectorConfig& config) {
    const std::size_t ks[] = {config.k};
    return std::move(calibrate_many(reference, ks, config.alpha, config.exclude_self).front());
}

Verdict CalibratedDetector::score(std::span<const double> query_raw) const {
    require_dims(query_raw.size(), dim());
    const auto z = canonical_unit_vector(query_raw);
    std::vector<double> scratch;
    const double d = std::sqrt(smallest_squared(z, reference_, k_, std::nullopt, scratch)[k_ - 1]);
    return {d, d > threshold_};
}

std::vector<Verdict> CalibratedDetector::batch_score(const EmbeddingMatrix& queries) const {
    if (queries.empty()) {
        return {};
    }
    require_dims(queries.dim(), dim());
    std::vector<Verdict> out(queries.rows());
    parallel_for(
        queries.rows(),
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                out[i] = score(queries.row(i));
            }
        },
        16);
    return out;
}

std::vector<std::vector<Verdict>> score_many(std::span<const CalibratedDetector> detectors,
                                             const EmbeddingMatrix& queries) {
    if (detectors.empty()) {
        return {};
    }
    const auto& first = detectors.front();
    std::size_t kmax = 0;
    for (const auto& det : detectors) {
        if (det.reference_hash() != first.reference_hash()) {
            throw Error(ErrorKind::InvalidArgument, "score_many requires detectors sharing one reference");
        }
        kmax = std::max(kmax, det.k());
    }
    std::vector<std::vector<Verdict>> out(detectors.size(), std::vector<Verdict>(queries.rows()));
    if (queries.empty()) {
        return out;
    }
    require_dims(queries.dim(), first.dim());
    parallel_for(
        queries.rows(),
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> scratch;
            for (std::size_t i = begin; i < end; ++i) {
                const auto z = canonical_unit_vector(queries.row(i));
                auto nearest = smallest_squared(z, first.reference_latents(), kmax, std::nullopt, scratch);
                for (std::size_t j = 0; j < detectors.size(); ++j) {
                    const double d = std::sqrt(nearest[detectors[j].k() - 1]);
                    out[j][i] = {d, d > detectors[j].threshold()};
                }
            }
        },
        16);
    return out;
}

double outlier_rate(std::span<const Verdict> verdicts) {
    if (verdicts.empty()) {
        throw Error(ErrorKind::EmptyInput, "no verdicts");
    }
    const auto outliers = std::count_if(verdicts.begin(), verdicts.end(),
                                        [](const Verdict& v) { return v.is_outlier; });
    return static_cast<double>(outliers) / static_cast<double>(verdicts.size());
}

DetectorPaths detector_paths(const fs::path& stem) {
    return {fs::path(stem.string() + ".detector.json"), fs::path(stem.string() + ".reference.emb")};
}

DetectorPaths save_detector(const CalibratedDetector& detector, const fs::path& stem) {
    const auto paths = detector_paths(stem);
    const auto bytes = encode_embeddings(detector.reference_latents());
    write_file_bytes(paths.reference, bytes);

    nlohmann::ordered_json j;
    j["k"] = detector.k();
    j["alpha"] = detector.alpha();
    j["threshold"] = detector.threshold();
    j["dim"] = detector.dim();
    j["n"] = detector.n();
    j["reference_hash"] = sha256_hex(bytes);
    j["rank"] = detector.rank();
    j["exclude_self"] = detector.exclude_self();
    j["reference_file"] = paths.reference.filename().string();
    const std::string text = j.dump(2) + "\n";
    write_file_bytes(paths.json, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return paths;
}

CalibratedDetector load_detector(const fs::path& detector_json) {
    const auto text = read_file_bytes(detector_json);
    CalibratedDetector det;
    fs::path reference_path;
    try {
        const auto j = nlohmann::json::parse(text.begin(), text.end());
        det.k_ = j.at("k").get<std::size_t>();
        det.alpha_ = j.at("alpha").get<double>();
        det.threshold_ = j.at("threshold").get<double>();
        det.reference_hash_ = j.at("reference_hash").get<std::string>();
        det.exclude_self_ = j.value("exclude_self", true);
        const auto n = j.at("n").get<std::size_t>();
        const auto dim = j.at("dim").get<std::size_t>();
        std::string ref_name = j.value("reference_file", std::string{});
        if (ref_name.empty()) {
            std::string stem = detector_json.string();
            const std::string suffix = ".detector.json";
            if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
                stem.resize(stem.size() - suffix.size());
            }
            reference_path = detector_paths(stem).reference;
        } else {
            reference_path = detector_json.parent_path() / ref_name;
        }
        const auto ref_bytes = read_file_bytes(reference_path);
        if (sha256_hex(ref_bytes) != det.reference_hash_) {
            throw Error(ErrorKind::HashMismatch, "reference file " + reference_path.string() +
                                                     " does not match reference_hash");
        }
        det.reference_ = canonical_unit_rows(decode_embeddings(ref_bytes, reference_path.string()));
        if (det.reference_.rows() != n || det.reference_.dim() != dim) {
            throw Error(ErrorKind::ShapeMismatch, "reference shape disagrees with detector metadata");
        }
        det.rank_ = j.value("rank", threshold_rank(n, det.alpha_));
        if (det.k_ == 0 || det.k_ > n) {
            throw Error(ErrorKind::KTooLarge, "stored k is out of range for the reference");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "detector " + detector_json.string() + ": " + e.what());
    }
    return det;
}

}  // namespace latent_audit

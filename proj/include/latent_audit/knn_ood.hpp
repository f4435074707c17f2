#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latent_audit/embedding_store.hpp"

namespace latent_audit {

/// Rows with a Euclidean norm below this are rejected with `ZeroVector`.
inline constexpr double kMinRowNorm = 1e-12;

struct DetectorConfig {
    std::size_t k = 1;
    double alpha = 0.01;
    /// Leave each reference point out of its own neighbor list during
    /// calibration. `false` gives the literal include-self reading, where
    /// k = 1 always calibrates to T = 0.
    bool exclude_self = true;
};

struct Verdict {
    double distance = 0.0;
    bool is_outlier = false;
};

/// Each row divided by its Euclidean norm (64-bit arithmetic).
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& matrix);

/// Unit rows in the detector's canonical form: normalized, rounded to the
/// float32 storage precision, then renormalized in 64-bit. The map is
/// idempotent, so a detector reloaded from its `.emb` file is bit-identical
/// to the one that was saved, and an exact copy of a reference row always
/// lands on that row.
EmbeddingMatrix canonical_unit_rows(const EmbeddingMatrix& matrix);
std::vector<double> canonical_unit_vector(std::span<const double> raw);

/// Squared Euclidean distance accumulated in four interleaved 64-bit lanes
/// (lane j sums components i with i % 4 == j, in index order; a tail shorter
/// than four goes to lane 0) and combined as (l0 + l1) + (l2 + l3).
/// This summation order is the contract every exact-equality check relies on.
double squared_distance(std::span<const double> a, std::span<const double> b);

/// k-th smallest Euclidean distance from `query` to the rows of `reference`,
/// skipping `exclude_index` when given.
double kth_nn_distance(std::span<const double> query, const EmbeddingMatrix& reference,
                       std::size_t k, std::optional<std::size_t> exclude_index = std::nullopt);

/// K = floor((1 - alpha) * n), the 1-indexed order statistic used as threshold.
std::size_t threshold_rank(std::size_t n, double alpha);

class CalibratedDetector {
public:
    std::size_t k() const noexcept { return k_; }
    double alpha() const noexcept { return alpha_; }
    bool exclude_self() const noexcept { return exclude_self_; }
    double threshold() const noexcept { return threshold_; }
    std::size_t rank() const noexcept { return rank_; }
    std::size_t n() const noexcept { return reference_.rows(); }
    std::size_t dim() const noexcept { return reference_.dim(); }
    const std::string& reference_hash() const noexcept { return reference_hash_; }
    const EmbeddingMatrix& reference_latents() const noexcept { return reference_; }
    /// Sorted calibration distances; empty for a detector loaded from disk.
    const std::vector<double>& calibration_distances() const noexcept { return sorted_distances_; }

    Verdict score(std::span<const double> query_raw) const;
    std::vector<Verdict> batch_score(const EmbeddingMatrix& queries) const;

    friend CalibratedDetector calibrate(const EmbeddingMatrix&, const DetectorConfig&);
    friend std::vector<CalibratedDetector> calibrate_many(const EmbeddingMatrix&,
                                                          std::span<const std::size_t>, double, bool);
    friend CalibratedDetector load_detector(const std::filesystem::path&);

private:
    CalibratedDetector() = default;

    EmbeddingMatrix reference_;
    std::size_t k_ = 1;
    double alpha_ = 0.0;
    bool exclude_self_ = true;
    std::size_t rank_ = 0;
    double threshold_ = 0.0;
    std::string reference_hash_;
    std::vector<double> sorted_distances_;
};

CalibratedDetector calibrate(const EmbeddingMatrix& reference, const DetectorConfig& config);

/// One detector per k, sharing a single pass of neighbor computation.
/// Each result equals `calibrate(reference, {k, alpha, exclude_self})`.
std::vector<CalibratedDetector> calibrate_many(const EmbeddingMatrix& reference,
                                               std::span<const std::size_t> ks, double alpha,
                                               bool exclude_self = true);

/// Scores `queries` against detectors that share one reference set (same
/// reference hash); result[j] equals detectors[j].batch_score(queries).
std::vector<std::vector<Verdict>> score_many(std::span<const CalibratedDetector> detectors,
                                             const EmbeddingMatrix& queries);

double outlier_rate(std::span<const Verdict> verdicts);

/// Paths of the detector file pair for a stem: `<stem>.detector.json` and
/// `<stem>.reference.emb`.
struct DetectorPaths {
    std::filesystem::path json;
    std::filesystem::path reference;
};
DetectorPaths detector_paths(const std::filesystem::path& stem);

DetectorPaths save_detector(const CalibratedDetector& detector, const std::filesystem::path& stem);

/// Loads from a `.detector.json` path; the reference file's SHA-256 must
/// match the recorded `reference_hash`.
CalibratedDetector load_detector(const std::filesystem::path& detector_json);

}  // namespace latent_audit

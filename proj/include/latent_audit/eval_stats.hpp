#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latent_audit/embedding_store.hpp"
#include "latent_audit/knn_ood.hpp"

namespace latent_audit {

/// Mean over classes 0..C-1 of per-class accuracy, C = truth.num_classes().
/// Throws `EmptyClass` if some class in that range has no samples.
double mean_class_accuracy(const LabelVector& truth, const LabelVector& predicted);

double overall_accuracy(const LabelVector& truth, const LabelVector& predicted);

/// Correctness counts split by kNN verdict for one (dataset, model) pair.
struct ConditionalAccuracyRow {
    std::string dataset;
    std::string model_id;
    std::size_t total = 0;
    std::size_t total_correct = 0;
    std::size_t inlier_total = 0;
    std::size_t inlier_correct = 0;
    std::size_t outlier_total = 0;
    std::size_t outlier_correct = 0;

    /// Fraction of correct predictions; NaN for an empty partition.
    double accuracy() const;
    double inlier_accuracy() const;
    double outlier_accuracy() const;
    /// Both partition identities and every correct <= total.
    bool consistent() const;
};

ConditionalAccuracyRow conditional_accuracy_table(const LabelVector& truth, const LabelVector& predicted,
                                                  std::span<const Verdict> verdicts, std::string dataset,
                                                  std::string model_id);

struct CorrelationResult {
    double r = 0.0;
    double p_two_sided = 1.0;
    std::size_t n = 0;
};

/// Sample Pearson correlation from centered 64-bit sums.
double pearson_r(std::span<const double> x, std::span<const double> y);

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction,
/// evaluated on whichever side of the symmetry split converges fastest.
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Two-sided p for H0: rho = 0, from t = r * sqrt((n - 2) / (1 - r^2)).
/// Throws `DegenerateN` for n < 3 and `PerfectCorrelation` for |r| = 1.
double t_two_sided_p(double r, std::size_t n);

/// r plus its t-test p. For |r| = 1 the p is reported as 0.
CorrelationResult correlate(std::span<const double> x, std::span<const double> y);

/// Monte Carlo two-sided permutation p: fraction of shuffles of y whose |r|
/// reaches the observed |r|, counting the observed arrangement once
/// ((hits + 1) / (resamples + 1)).
double permutation_p(std::span<const double> x, std::span<const double> y, std::size_t resamples,
                     std::uint64_t seed);

struct SummaryStats {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

SummaryStats summary_stats(std::span<const double> values);

/// Indices of instances A..D in ascending accuracy: argmin, the two distinct
/// instances closest to (min + max) / 2 (ties to lower index, lower accuracy
/// first), and argmax. Ties for argmin/argmax go to the lower index.
struct Representatives {
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t c = 0;
    std::size_t d = 0;
};

Representatives select_representatives(std::span<const double> val_accuracies);

/// Per-class counts of `labels` over classes 0..num_classes-1.
std::vector<std::size_t> class_counts(const LabelVector& labels, std::size_t num_classes);

}  // namespace latent_audit

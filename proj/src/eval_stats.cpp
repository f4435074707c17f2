#include "latent_audit/eval_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "latent_audit/error.hpp"
#include "latent_audit/rng.hpp"

namespace latent_audit {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorKind::LengthMismatch, std::string(what) + ": lengths " + std::to_string(a) +
                                                   " and " + std::to_string(b));
    }
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<std::size_t> class_counts(const LabelVector& labels, std::size_t num_classes) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::uint32_t y : labels.labels) {
        if (y < num_classes) {
            ++counts[y];
        }
    }
    return counts;
}

double mean_class_accuracy(const LabelVector& truth, const LabelVector& predicted) {
    require_same_length(truth.size(), predicted.size(), "mean_class_accuracy");
    if (truth.size() == 0) {
        throw Error(ErrorKind::EmptyInput, "no samples");
    }
    const std::size_t classes = truth.num_classes();
    std::vector<std::size_t> total(classes, 0), correct(classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::uint32_t y = truth.labels[i];
        if (y >= classes) {
            throw Error(ErrorKind::InvalidArgument, "label exceeds class count");
        }
        ++total[y];
        correct[y] += predicted.labels[i] == y ? 1 : 0;
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (total[c] == 0) {
            throw Error(ErrorKind::EmptyClass, "class " + std::to_string(c) + " has no samples");
        }
        sum += ratio(correct[c], total[c]);
    }
    return sum / static_cast<double>(classes);
}

double overall_accuracy(const LabelVector& truth, const LabelVector& predicted) {
    require_same_length(truth.size(), predicted.size(), "overall_accuracy");
    if (truth.size() == 0) {
        throw Error(ErrorKind::EmptyInput, "no samples");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        correct += truth.labels[i] == predicted.labels[i] ? 1 : 0;
    }
    return ratio(correct, truth.size());
}

double ConditionalAccuracyRow::accuracy() const { return ratio(total_correct, total); }
double ConditionalAccuracyRow::inlier_accuracy() const { return ratio(inlier_correct, inlier_total); }
double ConditionalAccuracyRow::outlier_accuracy() const { return ratio(outlier_correct, outlier_total); }

bool ConditionalAccuracyRow::consistent() const {
    return inlier_total + outlier_total == total && inlier_correct + outlier_correct == total_correct &&
           total_correct <= total && inlier_correct <= inlier_total && outlier_correct <= outlier_total;
}

ConditionalAccuracyRow conditional_accuracy_table(const LabelVector& truth, const LabelVector& predicted,
                                                  std::span<const Verdict> verdicts, std::string dataset,
                                                  std::string model_id) {
    require_same_length(truth.size(), predicted.size(), "conditional_accuracy_table");
    require_same_length(truth.size(), verdicts.size(), "conditional_accuracy_table");
    ConditionalAccuracyRow row;
    row.dataset = std::move(dataset);
    row.model_id = std::move(model_id);
    row.total = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool correct = truth.labels[i] == predicted.labels[i];
        if (verdicts[i].is_outlier) {
            ++row.outlier_total;
            row.outlier_correct += correct ? 1 : 0;
        } else {
            ++row.inlier_total;
            row.inlier_correct += correct ? 1 : 0;
        }
    }
    row.total_correct = row.inlier_correct + row.outlier_correct;
    return row;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    require_same_length(x.size(), y.size(), "pearson_r");
    const std::size_t n = x.size();
    if (n < 2) {
        throw Error(ErrorKind::DegenerateN, "pearson_r needs at least 2 points");
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::ConstantInput, "pearson_r of a constant sequence");
    }
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

namespace {

// Continued fraction for I_x(a, b) (modified Lentz).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) {
            break;
        }
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "incomplete_beta needs a, b > 0 and x in [0, 1]");
    }
    if (x == 0.0 || x == 1.0) {
        return x;
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cf(a, b, x) / a;
    }
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

namespace {

/// P(T > |t|) for Student's t.
double t_upper_tail(double t, double df) {
    const double x = df / (df + t * t);
    return 0.5 * incomplete_beta(0.5 * df, 0.5, x);
}

}  // namespace

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "degrees of freedom must be positive");
    }
    const double tail = t_upper_tail(t, df);
    return t > 0.0 ? 1.0 - tail : tail;
}

double t_two_sided_p(double r, std::size_t n) {
    if (n < 3) {
        throw Error(ErrorKind::DegenerateN, "t test needs n >= 3");
    }
    if (!(std::fabs(r) <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "|r| must not exceed 1");
    }
    if (std::fabs(r) == 1.0) {
        throw Error(ErrorKind::PerfectCorrelation, "|r| = 1; p is 0 by convention");
    }
    const double df = static_cast<double>(n - 2);
    const double t = r * std::sqrt(df / (1.0 - r * r));
    return std::clamp(2.0 * t_upper_tail(t, df), 0.0, 1.0);
}

CorrelationResult correlate(std::span<const double> x, std::span<const double> y) {
    CorrelationResult out;
    out.n = x.size();
    if (out.n < 3) {
        throw Error(ErrorKind::DegenerateN, "correlation p-value needs n >= 3");
    }
    out.r = pearson_r(x, y);
    out.p_two_sided = std::fabs(out.r) == 1.0 ? 0.0 : t_two_sided_p(out.r, out.n);
    return out;
}

double permutation_p(std::span<const double> x, std::span<const double> y, std::size_t resamples,
                     std::uint64_t seed) {
    const double observed = std::fabs(pearson_r(x, y));
    const std::size_t n = x.size();
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> dx(n), dy(n);
    double sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dx[i] = x[i] - mx;
        dy[i] = y[i] - my;
        sxx += dx[i] * dx[i];
        syy += dy[i] * dy[i];
    }
    const double denom = std::sqrt(sxx * syy);
    // Slack so that arrangements tying the observed |r| are not lost to rounding.
    const double cutoff = observed - 1e-12;
    Rng rng(substream_seed(seed, stream::kPermutation));
    std::size_t hits = 0;
    for (std::size_t s = 0; s < resamples; ++s) {
        for (std::size_t i = n; i > 1; --i) {
            std::swap(dy[i - 1], dy[rng.below(i)]);
        }
        double sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sxy += dx[i] * dy[i];
        }
        hits += std::fabs(sxy / denom) >= cutoff ? 1 : 0;
    }
    return static_cast<double>(hits + 1) / static_cast<double>(resamples + 1);
}

SummaryStats summary_stats(std::span<const double> values) {
    if (values.empty()) {
        throw Error(ErrorKind::EmptyInput, "summary_stats of an empty list");
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return {*lo, std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size()), *hi};
}

Representatives select_representatives(std::span<const double> acc) {
    const std::size_t n = acc.size();
    if (n < 4) {
        throw Error(ErrorKind::TooFewInstances, "need at least 4 instances, got " + std::to_string(n));
    }
    Representatives rep;
    for (std::size_t i = 1; i < n; ++i) {
        if (acc[i] < acc[rep.a]) rep.a = i;
    }
    rep.d = rep.a == 0 ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != rep.a && acc[i] > acc[rep.d]) rep.d = i;
    }
    const double mid = 0.5 * (acc[rep.a] + acc[rep.d]);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != rep.a && i != rep.d) candidates.push_back(i);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t l, std::size_t r) {
        return std::fabs(acc[l] - mid) < std::fabs(acc[r] - mid);
    });
    std::size_t b = candidates[0];
    std::size_t c = candidates[1];
    if (acc[c] < acc[b] || (acc[c] == acc[b] && c < b)) {
        std::swap(b, c);
    }
    rep.b = b;
    rep.c = c;
    return rep;
}

}  // namespace latent_audit

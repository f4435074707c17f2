// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "brute_force_oracle.hpp"

#include "latent_audit/embedding_store.hpp"
#include "latent_audit/eval_stats.hpp"
#include "latent_audit/knn_ood.hpp"
#include "latent_audit/report.hpp"
#include "latent_audit/synth_data.hpp"
#include "latent_audit/toy_encoder.hpp"

using namespace latent_audit;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

/// Fixed 64-dimensional Gaussian mixture: five unit-variance components.
class Mixture {
public:
    static constexpr std::size_t kDim = 64;

    Mixture() {
        std::mt19937_64 gen(20240601);
        std::normal_distribution<double> normal;
        for (auto& mean : means_) {
            mean.resize(kDim);
            for (double& v : mean) v = 3.0 * normal(gen);
        }
    }

    EmbeddingMatrix sample(std::size_t n, std::uint64_t seed) const { return draw(n, seed, false); }

    /// One component pushed to the opposite side of the origin and shrunk.
    EmbeddingMatrix displaced(std::size_t n, std::uint64_t seed) const { return draw(n, seed, true); }

private:
    EmbeddingMatrix draw(std::size_t n, std::uint64_t seed, bool far) const {
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> normal;
        std::uniform_int_distribution<std::size_t> pick(0, means_.size() - 1);
        std::vector<double> data(n * kDim);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& mean = means_[far ? 0 : pick(gen)];
            for (std::size_t j = 0; j < kDim; ++j) {
                data[i * kDim + j] = far ? -10.0 * mean[j] + 0.1 * normal(gen) : mean[j] + normal(gen);
            }
        }
        return EmbeddingMatrix(n, kDim, std::move(data));
    }

    std::vector<std::vector<double>> means_ = std::vector<std::vector<double>>(5);
};

EmbeddingMatrix random_gaussian(std::mt19937_64& gen, std::size_t n, std::size_t d) {
    std::normal_distribution<double> normal;
    std::vector<double> data(n * d);
    for (double& v : data) v = normal(gen);
    return EmbeddingMatrix(n, d, std::move(data));
}

oracle::Rows to_rows(const EmbeddingMatrix& m) {
    oracle::Rows rows;
    for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
    return rows;
}

EmbeddingMatrix scaled(const EmbeddingMatrix& m, double c) {
    std::vector<double> data(m.data().begin(), m.data().end());
    for (double& v : data) v *= c;
    return EmbeddingMatrix(m.rows(), m.dim(), std::move(data));
}

// 1
Outcome calibration_rate() {
    const auto t0 = Clock::now();
    const Mixture mix;
    const auto reference = mix.sample(10000, 1);
    const auto held_out = mix.sample(10000, 2);
    const std::size_t ks[] = {1, 10, 100};
    const double alpha = 0.01;
    const double tol = 4.0 * std::sqrt(alpha * (1.0 - alpha) / 10000.0);
    const auto detectors = calibrate_many(reference, ks, alpha, true);
    const auto verdicts = score_many(detectors, held_out);
    Outcome out;
    for (std::size_t j = 0; j < 3; ++j) {
        const double rate = outlier_rate(verdicts[j]);
        out.pass = out.pass && std::abs(rate - alpha) <= tol;
        out.detail += fmt("k=%zu rate=%.4f  ", ks[j], rate);
    }
    const double secs = seconds_since(t0);
    out.pass = out.pass && secs < 120.0;
    out.detail += fmt("(allowed %.4f..%.4f, %.1fs of 120s)", alpha - tol, alpha + tol, secs);
    return out;
}

// 2
Outcome far_saturation() {
    const Mixture mix;
    const auto reference = mix.sample(10000, 1);
    const auto far = mix.displaced(2000, 3);
    const std::size_t ks[] = {1, 10, 100};
    const auto detectors = calibrate_many(reference, ks, 0.01, true);
    const auto verdicts = score_many(detectors, far);
    Outcome out;
    for (std::size_t j = 0; j < 3; ++j) {
        double nearest = INFINITY;
        for (const auto& v : verdicts[j]) nearest = std::min(nearest, v.distance);
        const double rate = outlier_rate(verdicts[j]);
        out.pass = out.pass && rate == 1.0;
        out.detail += fmt("k=%zu %.1f%% (min d=%.3f > T=%.3f)  ", ks[j], 100.0 * rate, nearest,
                          detectors[j].threshold());
    }
    return out;
}

// 3
Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(777);
    const std::size_t k_choices[] = {1, 3, 10};
    const double alphas[] = {0.01, 0.05, 0.1, 0.25};
    std::size_t mismatches = 0, verdicts = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(12, 500)(gen);
        const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 64)(gen);
        const std::size_t k = k_choices[inst % 3];
        const double alpha = alphas[std::uniform_int_distribution<int>(0, 3)(gen)];
        const bool exclude = (inst / 3) % 2 == 0;
        auto reference = random_gaussian(gen, n, d);
        auto queries = random_gaussian(gen, 40, d);
        if (d == 1) {
            // One-dimensional unit vectors are +-1; keep both signs present.
            std::vector<double> data(reference.data().begin(), reference.data().end());
            data[0] = std::abs(data[0]) + 0.5;
            data[1] = -std::abs(data[1]) - 0.5;
            reference = EmbeddingMatrix(n, d, std::move(data));
        }
        if (threshold_rank(n, alpha) == 0) continue;
        const auto det = calibrate(reference, {k, alpha, exclude});
        const auto got = det.batch_score(queries);
        const auto expect = oracle::run(to_rows(reference), to_rows(queries), k, alpha, exclude);
        if (det.threshold() != expect.threshold || det.rank() != expect.rank) ++mismatches;
        for (std::size_t i = 0; i < got.size(); ++i) {
            ++verdicts;
            if (got[i].distance != expect.query_distances[i] || got[i].is_outlier != expect.outliers[i]) {
                ++mismatches;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 60.0,
            fmt("200 instances, %zu verdicts, %zu mismatches (%.1fs of 60s)", verdicts, mismatches, secs)};
}

// 4
Outcome monotone_in_k() {
    std::mt19937_64 gen(4242);
    const std::size_t ks[] = {1, 10, 100};
    std::size_t violations = 0;
    for (int r = 0; r < 50; ++r) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(150, 600)(gen);
        const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 32)(gen);
        const auto dets = calibrate_many(random_gaussian(gen, n, d), ks, 0.01, true);
        if (!(dets[0].threshold() <= dets[1].threshold() && dets[1].threshold() <= dets[2].threshold())) {
            ++violations;
        }
    }
    return {violations == 0, fmt("50 references, %zu violations of T(1) <= T(10) <= T(100)", violations)};
}

// 5
Outcome scale_invariance() {
    std::mt19937_64 gen(55);
    const auto reference = random_gaussian(gen, 800, 16);
    const auto queries = random_gaussian(gen, 400, 16);
    const std::size_t ks[] = {1, 10, 100};
    const auto base = score_many(calibrate_many(reference, ks, 0.05, true), queries);
    const auto base_t = calibrate_many(reference, ks, 0.05, true);
    std::size_t flips = 0;
    double worst = 0.0;
    for (double c : {1e-3, 1.0, 1e3}) {
        const auto dets = calibrate_many(scaled(reference, c), ks, 0.05, true);
        const auto v = score_many(dets, scaled(queries, c));
        for (std::size_t j = 0; j < 3; ++j) {
            worst = std::max(worst, std::abs(dets[j].threshold() - base_t[j].threshold()));
            for (std::size_t i = 0; i < queries.rows(); ++i) {
                worst = std::max(worst, std::abs(v[j][i].distance - base[j][i].distance));
                if (v[j][i].is_outlier != base[j][i].is_outlier) ++flips;
            }
        }
    }
    return {flips == 0 && worst <= 1e-9,
            fmt("c in {1e-3, 1, 1e3}: %zu verdict changes, max |delta distance| = %.2e", flips, worst)};
}

// 6
Outcome statistics_anchors() {
    Outcome out;
    const double p1 = t_two_sided_p(0.36, 50);
    const double p2 = t_two_sided_p(0.26, 50);
    out.pass = p1 >= 0.008 && p1 <= 0.012 && p2 >= 0.06 && p2 <= 0.08;

    const std::vector<double> x = {1, 2, 3}, y = {1, 2, 2}, neg = {-1, -2, -3};
    const double r_half = pearson_r(x, y);
    out.pass = out.pass && std::abs(r_half - std::sqrt(3.0) / 2.0) <= 1e-12;
    out.pass = out.pass && std::abs(pearson_r(x, x) - 1.0) <= 1e-12 && std::abs(pearson_r(x, neg) + 1.0) <= 1e-12;

    std::mt19937_64 gen(66);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(10, 30)(gen);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = normal(gen);
            b[i] = 0.6 * a[i] + normal(gen);
        }
        const auto c = correlate(a, b);
        const double perm = permutation_p(a, b, 10000, 1000 + static_cast<std::uint64_t>(s));
        worst = std::max(worst, std::abs(perm - c.p_two_sided));
    }
    out.pass = out.pass && worst <= 0.01;
    out.detail = fmt("p(0.36,50)=%.4f p(0.26,50)=%.4f r([1,2,3],[1,2,2])=%.10f; "
                     "max |p_t - p_perm| over 20 datasets = %.4f",
                     p1, p2, r_half, worst);
    return out;
}

// 7
Outcome augmentation_contract() {
    const auto images = gen_rayleigh_images(20, 16, 1.0, 9);
    bool identity = true;
    for (std::size_t i = 0; i < images.size(); ++i) {
        identity = identity && augment_image(images[i], {0.0, i}) == images[i];
    }
    const std::vector<Image> zeros(10000, Image::filled(10, 10, 0.0));
    const auto noisy = augment_all(zeros, 0.1, 31337);
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    bool in_range = true;
    for (const auto& img : noisy) {
        for (double p : img.pixels()) {
            sum += p;
            sq += p * p;
            ++count;
            in_range = in_range && p >= -1.0 && p <= 1.0;
        }
    }
    for (const auto& img : augment_all(images, 1.2, 5)) {
        for (double p : img.pixels()) in_range = in_range && p >= -1.0 && p <= 1.0;
    }
    const double mean = sum / static_cast<double>(count);
    const double sd = std::sqrt(sq / static_cast<double>(count) - mean * mean);
    const bool spread = std::abs(sd - 0.1) <= 0.002;
    return {identity && spread && in_range,
            fmt("sigma=0 identity %s; sigma=0.1 std=%.5f over %zu draws; outputs in [-1,1] %s",
                identity ? "yes" : "no", sd, count, in_range ? "yes" : "no")};
}

// 8
Outcome gradient_check() {
    ToyDatasetSpec spec;
    spec.num_classes = 10;
    spec.per_class = 1;
    spec.size = 8;
    spec.class_template_seed = 8;
    spec.sample_seed = 8;
    const auto ds = gen_toy_dataset(spec);
    MlpArchitecture arch;
    arch.input_dim = 64;
    arch.num_classes = 10;
    Mlp model = Mlp::initialize(arch, 8);
    const std::vector<Image> three(ds.images.begin(), ds.images.begin() + 3);
    const Batch x = images_to_batch(three);
    const std::vector<std::uint32_t> y(ds.labels.labels.begin(), ds.labels.labels.begin() + 3);
    const auto w = class_weights(ds.labels);

    const auto analytic = model.loss_and_gradient(x, y, w);
    const double h = 1e-5;
    double worst = 0.0;
    std::size_t params = 0;
    auto check = [&](double& p, double g) {
        const double saved = p;
        p = saved + h;
        const double up = model.loss(x, y, w);
        p = saved - h;
        const double down = model.loss(x, y, w);
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(g - numeric) / std::max({std::abs(g), std::abs(numeric), 1e-6}));
        ++params;
    };
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        auto& layer = model.layers()[l];
        const auto& g = analytic.gradient[l];
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) check(layer.weight.data()[i], g.weight.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias.data()[i], g.bias.data()[i]);
    }
    return {worst < 1e-4, fmt("%zu parameters, max relative error %.2e (limit 1e-4)", params, worst)};
}

struct EndToEnd {
    Outcome outcome;
    std::vector<ConditionalAccuracyRow> rows;
};

// 9
EndToEnd decoupling() {
    const auto t0 = Clock::now();
    const double sigma = 1.2;
    const double alpha = 0.01;
    ToyDatasetSpec spec;
    spec.num_classes = 10;
    spec.per_class = 100;
    spec.size = 32;
    spec.template_contrast = 20.0;
    spec.class_template_seed = 11;
    spec.sample_seed = 1;
    const auto train = gen_toy_dataset(spec);
    spec.sample_seed = 2;
    const auto held_out = gen_toy_dataset(spec);
    const auto train_aug = augment_all(train.images, sigma, 101);
    const auto held_out_aug = augment_all(held_out.images, sigma, 102);

    MlpArchitecture arch;
    arch.input_dim = spec.size * spec.size;
    arch.num_classes = spec.num_classes;
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.sigma_noise = sigma;
    const auto ensemble =
        train_ensemble(train.images, train.labels, arch, cfg, held_out_aug, held_out.labels, 10, 7);

    EndToEnd result;
    double rate_a = 0.0, rate_b = 0.0, acc_a = 0.0, acc_b = 0.0;
    double min_acc_a = 1.0, min_acc_b = 1.0, max_rate_a = 0.0, min_rate_b = 1.0;
    for (const auto& inst : ensemble) {
        const auto det = calibrate(extract_latent(inst, train_aug), {1, alpha, true});
        const auto va = det.batch_score(extract_latent(inst, held_out_aug));
        const auto vb = det.batch_score(extract_latent(inst, held_out.images));
        const auto pa = predict(inst, held_out_aug);
        const auto pb = predict(inst, held_out.images);
        const double ra = outlier_rate(va), rb = outlier_rate(vb);
        const double aa = mean_class_accuracy(held_out.labels, pa);
        const double ab = mean_class_accuracy(held_out.labels, pb);
        rate_a += ra / 10.0;
        rate_b += rb / 10.0;
        acc_a += aa / 10.0;
        acc_b += ab / 10.0;
        min_acc_a = std::min(min_acc_a, aa);
        min_acc_b = std::min(min_acc_b, ab);
        max_rate_a = std::max(max_rate_a, ra);
        min_rate_b = std::min(min_rate_b, rb);
        const std::string id = "seed" + std::to_string(inst.seed);
        result.rows.push_back(conditional_accuracy_table(held_out.labels, pa, va, "augmented", id));
        result.rows.push_back(conditional_accuracy_table(held_out.labels, pb, vb, "clean", id));
    }
    const double secs = seconds_since(t0);
    const bool a_ok = rate_a <= 2.0 * alpha && acc_a >= 0.9;
    const bool b_ok = rate_b >= 0.5 && acc_b >= 0.9;
    result.outcome = {
        a_ok && b_ok && secs < 600.0,
        fmt("(a) augmented: outlier rate %.4f (max %.4f, need <= %.2f), accuracy %.3f (min %.3f, need >= 0.9) %s; "
            "(b) clean: outlier rate %.4f (min %.4f, need >= 0.5), accuracy %.3f (min %.3f, need >= 0.9) %s; "
            "%.0fs of 600s",
            rate_a, max_rate_a, 2.0 * alpha, acc_a, min_acc_a, a_ok ? "ok" : "FAILED", rate_b, min_rate_b, acc_b,
            min_acc_b, b_ok ? "ok" : "FAILED", secs)};
    return result;
}

// 10
Outcome table_identities(const std::vector<ConditionalAccuracyRow>& rows) {
    ConditionalAccuracyRow published;
    published.total = 10000;
    published.total_correct = 9565;
    published.inlier_total = 9838;
    published.inlier_correct = 9431;
    published.outlier_total = 162;
    published.outlier_correct = 134;
    bool ok = published.consistent() && published.inlier_total + published.outlier_total == 10000;

    std::size_t checked = 0;
    auto identities = [](const ConditionalAccuracyRow& r) {
        return r.inlier_total + r.outlier_total == r.total && r.inlier_correct + r.outlier_correct == r.total_correct;
    };
    for (const auto& r : rows) {
        ok = ok && identities(r) && r.consistent();
        ++checked;
    }

    std::mt19937_64 gen(10);
    std::vector<ModelReference> models;
    std::vector<DatasetEmbeddings> data;
    for (int m = 0; m < 4; ++m) {
        const std::string id = "m" + std::to_string(m);
        models.push_back({id, random_gaussian(gen, 300, 8)});
        LabelVector truth, pred;
        for (std::uint32_t i = 0; i < 200; ++i) {
            truth.labels.push_back(i % 4);
            pred.labels.push_back(std::uniform_int_distribution<std::uint32_t>(0, 3)(gen));
        }
        data.push_back({"random", id, random_gaussian(gen, 200, 8), truth, pred});
    }
    const std::size_t ks[] = {1, 10, 100};
    for (const auto& cell : evaluate(models, data, ks, 0.05).conditional) {
        ok = ok && identities(cell.row) && cell.row.consistent();
        ++checked;
    }
    return {ok, fmt("9838 + 162 = 10000 fixture and %zu computed rows", checked)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    std::vector<ConditionalAccuracyRow> e2e_rows;
    const std::vector<Criterion> criteria = {
        {1, "calibration rate", calibration_rate},
        {2, "far-distribution saturation", far_saturation},
        {3, "oracle equivalence", oracle_equivalence},
        {4, "threshold monotone in k", monotone_in_k},
        {5, "scale invariance", scale_invariance},
        {6, "statistics anchors", statistics_anchors},
        {7, "augmentation contract", augmentation_contract},
        {8, "gradient check", gradient_check},
        {9, "end-to-end decoupling",
         [&] {
             auto r = decoupling();
             e2e_rows = std::move(r.rows);
             return r.outcome;
         }},
        {10, "table structure identities", [&] { return table_identities(e2e_rows); }},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}

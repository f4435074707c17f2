#include <cmath>
#include <fstream>
#include <random>

#include "brute_force_oracle.hpp"
#include "doctest.h"
#include "test_util.hpp"

#include "latent_audit/embedding_store.hpp"
#include "latent_audit/knn_ood.hpp"

using namespace latent_audit;
using test_util::error_kind;
using test_util::TempDir;

namespace {

EmbeddingMatrix basis4() {
    return EmbeddingMatrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
}

oracle::Rows to_rows(const EmbeddingMatrix& m) {
    oracle::Rows rows;
    for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
    return rows;
}

EmbeddingMatrix random_matrix(std::mt19937_64& gen, std::size_t n, std::size_t d) {
    std::normal_distribution<double> normal;
    std::vector<double> data(n * d);
    for (double& v : data) v = normal(gen);
    return EmbeddingMatrix(n, d, std::move(data));
}

}  // namespace

TEST_SUITE("knn_ood") {

TEST_CASE("normalize_rows") {
    const auto u = normalize_rows(EmbeddingMatrix(2, 2, {3, 4, 1, 0}));
    CHECK(u(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(u(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(u(1, 0) == 1.0);
    CHECK(u(1, 1) == 0.0);
    CHECK(error_kind([] { normalize_rows(EmbeddingMatrix(1, 2, {0, 0})); }) == ErrorKind::ZeroVector);
}

TEST_CASE("canonical rows are unit length and idempotent") {
    std::mt19937_64 gen(5);
    const auto m = random_matrix(gen, 20, 7);
    const auto c = canonical_unit_rows(m);
    CHECK(canonical_unit_rows(c) == c);
    for (std::size_t i = 0; i < c.rows(); ++i) {
        double s = 0.0;
        for (double v : c.row(i)) s += v * v;
        CHECK(std::abs(s - 1.0) < 1e-15);
    }
}

TEST_CASE("squared_distance matches a straight sum to rounding") {
    std::mt19937_64 gen(9);
    for (std::size_t d : {1u, 3u, 4u, 5u, 17u, 64u}) {
        const auto m = random_matrix(gen, 2, d);
        double plain = 0.0;
        for (std::size_t j = 0; j < d; ++j) plain += (m(0, j) - m(1, j)) * (m(0, j) - m(1, j));
        CHECK(squared_distance(m.row(0), m.row(1)) == doctest::Approx(plain).epsilon(1e-14));
        CHECK(squared_distance(m.row(0), m.row(1)) == oracle::sq_dist(to_rows(m)[0], to_rows(m)[1]));
    }
}

TEST_CASE("kth_nn_distance on the standard basis") {
    const auto ref = basis4();
    const std::vector<double> e1 = {1, 0, 0, 0};
    CHECK(kth_nn_distance(e1, ref, 1) == 0.0);
    CHECK(kth_nn_distance(e1, ref, 1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

    // Brute force over the four candidates for normalize((1,1,0,0)).
    const double h = 1.0 / std::sqrt(2.0);
    const std::vector<double> q = {h, h, 0, 0};
    double best = 1e9;
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += (q[j] - ref(r, j)) * (q[j] - ref(r, j));
        best = std::min(best, std::sqrt(s));
    }
    CHECK(kth_nn_distance(q, ref, 1) == doctest::Approx(best).epsilon(1e-12));
    CHECK(best == doctest::Approx(std::sqrt(2.0 - std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("kth_nn_distance argument errors") {
    const auto ref = basis4();
    const std::vector<double> e1 = {1, 0, 0, 0};
    CHECK(error_kind([&] { kth_nn_distance(e1, ref, 5); }) == ErrorKind::KTooLarge);
    CHECK(error_kind([&] { kth_nn_distance(e1, ref, 4, 0); }) == ErrorKind::KTooLarge);
    const std::vector<double> short_q = {1, 0, 0};
    CHECK(error_kind([&] { kth_nn_distance(short_q, ref, 1); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("threshold rank") {
    CHECK(threshold_rank(100, 0.01) == 99);
    CHECK(threshold_rank(10000, 0.01) == 9900);
    CHECK(threshold_rank(4, 0.25) == 3);
    CHECK(threshold_rank(10, 0.15) == 8);
}

TEST_CASE("symmetric basis calibration") {
    const auto det = calibrate(basis4(), {1, 0.25, true});
    CHECK(det.rank() == 3);
    CHECK(det.threshold() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    for (double d : det.calibration_distances()) CHECK(d == det.threshold());
}

TEST_CASE("score: member, inclusive boundary and far query") {
    const auto det = calibrate(basis4(), {1, 0.25, true});
    const std::vector<double> e1 = {1, 0, 0, 0};
    const auto member = det.score(e1);
    CHECK(member.distance == 0.0);
    CHECK_FALSE(member.is_outlier);

    const std::vector<double> neg = {-1, 0, 0, 0};
    const auto boundary = det.score(neg);
    CHECK(boundary.distance == det.threshold());
    CHECK_FALSE(boundary.is_outlier);

    const std::vector<double> far = {-1, -1, -1, -1};
    const auto v = det.score(far);
    const double expected = oracle::run(to_rows(basis4()), {far}, 1, 0.25, true).query_distances[0];
    CHECK(v.distance == expected);
    // |(-1/2,...) - e_j|^2 = (3/2)^2 + 3/4 = 3
    CHECK(v.distance == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
    CHECK(v.is_outlier == (v.distance > det.threshold()));
    CHECK(v.is_outlier);
}

TEST_CASE("calibration errors") {
    const auto ref = basis4();
    CHECK(error_kind([&] { calibrate(ref, {4, 0.25, true}); }) == ErrorKind::KTooLarge);
    CHECK(calibrate(ref, {4, 0.25, false}).k() == 4);
    CHECK(error_kind([&] { calibrate(ref, {1, 0.0, true}); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { calibrate(ref, {1, 1.0, true}); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { calibrate(ref, {0, 0.5, true}); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { calibrate(ref, {1, 0.9, true}); }) == ErrorKind::AlphaDegenerate);
    CHECK(error_kind([&] { calibrate(EmbeddingMatrix(0, 3, {}), {1, 0.1, true}); }) == ErrorKind::EmptyInput);
    CHECK(error_kind([&] { calibrate(EmbeddingMatrix(2, 2, {1, 0, 0, 0}), {1, 0.4, true}); }) ==
          ErrorKind::ZeroVector);
}

TEST_CASE("calibration and scoring match the brute-force oracle") {
    std::mt19937_64 gen(2024);
    const auto ref = random_matrix(gen, 200, 8);
    const auto queries = random_matrix(gen, 50, 8);
    for (bool exclude : {true, false}) {
        const auto det = calibrate(ref, {3, 0.05, exclude});
        const auto expect = oracle::run(to_rows(ref), to_rows(queries), 3, 0.05, exclude);
        CHECK(det.threshold() == expect.threshold);
        CHECK(det.rank() == expect.rank);
        const auto verdicts = det.batch_score(queries);
        for (std::size_t i = 0; i < verdicts.size(); ++i) {
            CHECK(verdicts[i].distance == expect.query_distances[i]);
            CHECK(verdicts[i].is_outlier == expect.outliers[i]);
        }
    }
}

TEST_CASE("batch_score equals looped score") {
    std::mt19937_64 gen(77);
    const auto ref = random_matrix(gen, 120, 5);
    const auto queries = random_matrix(gen, 40, 5);
    const auto det = calibrate(ref, {2, 0.1, true});
    const auto batch = det.batch_score(queries);
    REQUIRE(batch.size() == 40);
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        const auto v = det.score(queries.row(i));
        CHECK(v.distance == batch[i].distance);
        CHECK(v.is_outlier == batch[i].is_outlier);
    }
    CHECK(det.batch_score(EmbeddingMatrix(0, 5, {})).empty());
}

TEST_CASE("reference rows score as inliers at distance zero with k=1") {
    std::mt19937_64 gen(3);
    const auto ref = random_matrix(gen, 60, 6);
    const auto det = calibrate(ref, {1, 0.05, true});
    for (const auto& v : det.batch_score(ref)) {
        CHECK(v.distance == 0.0);
        CHECK_FALSE(v.is_outlier);
    }
}

TEST_CASE("calibrate_many and score_many agree with single-k calls") {
    std::mt19937_64 gen(11);
    const auto ref = random_matrix(gen, 90, 4);
    const auto queries = random_matrix(gen, 30, 4);
    const std::size_t ks[] = {1, 5, 10};
    const auto many = calibrate_many(ref, ks, 0.1, true);
    const auto scored = score_many(many, queries);
    for (std::size_t j = 0; j < 3; ++j) {
        const auto single = calibrate(ref, {ks[j], 0.1, true});
        CHECK(many[j].threshold() == single.threshold());
        CHECK(many[j].calibration_distances() == single.calibration_distances());
        const auto expect = single.batch_score(queries);
        for (std::size_t i = 0; i < expect.size(); ++i) {
            CHECK(scored[j][i].distance == expect[i].distance);
            CHECK(scored[j][i].is_outlier == expect[i].is_outlier);
        }
    }
    std::vector<CalibratedDetector> mixed = {many[0], calibrate(queries, {1, 0.1, true})};
    CHECK(error_kind([&] { score_many(mixed, queries); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("outlier_rate") {
    const std::vector<Verdict> all_in(5, Verdict{0.1, false});
    CHECK(outlier_rate(all_in) == 0.0);
    std::vector<Verdict> table(10000, Verdict{0.1, false});
    for (std::size_t i = 0; i < 162; ++i) table[i].is_outlier = true;
    CHECK(outlier_rate(table) == 0.0162);
    const std::vector<Verdict> three_of_four = {{1, true}, {1, true}, {0, false}, {1, true}};
    CHECK(outlier_rate(three_of_four) == 0.75);
    CHECK(error_kind([] { outlier_rate(std::vector<Verdict>{}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("saved detector reloads bit-identically") {
    TempDir dir;
    std::mt19937_64 gen(8);
    const auto ref = random_matrix(gen, 80, 6);
    const auto queries = random_matrix(gen, 20, 6);
    const auto det = calibrate(ref, {4, 0.05, true});
    const auto paths = save_detector(det, dir / "det");
    CHECK(paths.json.filename() == "det.detector.json");
    CHECK(paths.reference.filename() == "det.reference.emb");

    const auto back = load_detector(paths.json);
    CHECK(back.k() == det.k());
    CHECK(back.alpha() == det.alpha());
    CHECK(back.threshold() == det.threshold());
    CHECK(back.reference_latents() == det.reference_latents());
    const auto a = det.batch_score(queries);
    const auto b = back.batch_score(queries);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].distance == b[i].distance);
        CHECK(a[i].is_outlier == b[i].is_outlier);
    }
    // The stored threshold is reproduced by recalibrating on the saved reference.
    CHECK(calibrate(read_embeddings(paths.reference), {4, 0.05, true}).threshold() == det.threshold());
}

TEST_CASE("tampered reference file fails the hash check") {
    TempDir dir;
    const auto det = calibrate(basis4(), {1, 0.25, true});
    const auto paths = save_detector(det, dir / "det");
    write_embeddings(EmbeddingMatrix(4, 4, {0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}), paths.reference);
    CHECK(error_kind([&] { load_detector(paths.json); }) == ErrorKind::HashMismatch);
}

}  // TEST_SUITE

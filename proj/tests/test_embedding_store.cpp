#include <cmath>
#include <cstring>
#include <limits>

#include "doctest.h"
#include "test_util.hpp"

#include "latent_audit/embedding_store.hpp"

using namespace latent_audit;
using test_util::error_kind;
using test_util::TempDir;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

std::vector<std::uint8_t> emb_bytes(const char* magic, std::uint32_t n, std::uint32_t d,
                                    const std::vector<float>& values) {
    std::vector<std::uint8_t> out(magic, magic + 4);
    put_u32(out, n);
    put_u32(out, d);
    for (float f : values) put_f32(out, f);
    return out;
}

}  // namespace

TEST_SUITE("embedding_store") {

TEST_CASE("1x1 zero matrix encodes to a 16-byte file") {
    const auto bytes = encode_embeddings(EmbeddingMatrix(1, 1, {0.0}));
    CHECK(bytes.size() == 16);
    CHECK(bytes == emb_bytes("EMB1", 1, 1, {0.0f}));
}

TEST_CASE("2x3 matrix encodes to a 12-byte header plus 24 payload bytes") {
    const EmbeddingMatrix m(2, 3, {1.0, 2.0, 3.0, -4.0, 0.5, 0.25});
    const auto bytes = encode_embeddings(m);
    CHECK(bytes.size() == 4 + 4 + 4 + 24);
    CHECK(bytes == emb_bytes("EMB1", 2, 3, {1.0f, 2.0f, 3.0f, -4.0f, 0.5f, 0.25f}));
}

TEST_CASE("file round trip is bit-identical for float32-representable values") {
    TempDir dir;
    const EmbeddingMatrix m(3, 2, {0.1f, -2.75f, 1e-30f, 3.0e30f, 0.0, -0.0f});
    write_embeddings(m, dir / "m.emb");
    const auto back = read_embeddings(dir / "m.emb");
    CHECK(back == m);
    CHECK(back.rows() == 3);
    CHECK(back.dim() == 2);
    CHECK(std::signbit(back(2, 1)));
}

TEST_CASE("values are stored as float32") {
    const EmbeddingMatrix m(1, 1, {0.1});
    const auto back = decode_embeddings(encode_embeddings(m));
    CHECK(back(0, 0) == static_cast<double>(0.1f));
}

TEST_CASE("zero-row matrix round trips") {
    const EmbeddingMatrix m(0, 5, {});
    const auto bytes = encode_embeddings(m);
    CHECK(bytes.size() == 12);
    const auto back = decode_embeddings(bytes);
    CHECK(back.rows() == 0);
    CHECK(back.dim() == 5);
}

TEST_CASE("bad magic is rejected") {
    const auto bytes = emb_bytes("EMB0", 1, 1, {1.0f});
    CHECK(error_kind([&] { decode_embeddings(bytes); }) == ErrorKind::BadMagic);
}

TEST_CASE("short payload is Truncated") {
    auto bytes = emb_bytes("EMB1", 2, 2, {1.0f, 2.0f, 3.0f});
    CHECK(bytes.size() == 12 + 12);
    CHECK(error_kind([&] { decode_embeddings(bytes); }) == ErrorKind::Truncated);
    const std::vector<std::uint8_t> header_only = {'E', 'M', 'B', '1', 1, 0};
    CHECK(error_kind([&] { decode_embeddings(header_only); }) == ErrorKind::Truncated);
}

TEST_CASE("non-finite values are rejected on construction and decode") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK(error_kind([&] { EmbeddingMatrix(1, 2, {0.0, nan}); }) == ErrorKind::NonFinite);
    const auto bytes = emb_bytes("EMB1", 1, 1, {std::numeric_limits<float>::infinity()});
    CHECK(error_kind([&] { decode_embeddings(bytes); }) == ErrorKind::NonFinite);
}

TEST_CASE("values beyond float32 range cannot be written") {
    const EmbeddingMatrix m(1, 1, {1e300});
    CHECK(error_kind([&] { encode_embeddings(m); }) == ErrorKind::NonFinite);
}

TEST_CASE("shape errors") {
    CHECK(error_kind([] { EmbeddingMatrix(1, 0, {}); }) == ErrorKind::ShapeMismatch);
    CHECK(error_kind([] { EmbeddingMatrix(2, 2, {1.0}); }) == ErrorKind::ShapeMismatch);
    CHECK(error_kind([] { decode_embeddings(emb_bytes("EMB1", 0, 0, {})); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("missing file is an Io error") {
    TempDir dir;
    CHECK(error_kind([&] { read_embeddings(dir / "absent.emb"); }) == ErrorKind::Io);
}

TEST_CASE("select_rows copies rows in the requested order") {
    const EmbeddingMatrix m(3, 2, {1, 2, 3, 4, 5, 6});
    const std::size_t idx[] = {2, 0, 2};
    CHECK(m.select_rows(idx) == EmbeddingMatrix(3, 2, {5, 6, 1, 2, 5, 6}));
}

TEST_CASE("labels parse directly") {
    std::vector<std::uint8_t> bytes = {'L', 'B', 'L', '1'};
    put_u32(bytes, 3);
    for (std::uint32_t id : {0u, 1u, 0u}) put_u32(bytes, id);
    const auto labels = decode_labels(bytes);
    CHECK(labels.labels == std::vector<std::uint32_t>{0, 1, 0});
    CHECK(labels.num_classes() == 2);
    CHECK(encode_labels(labels) == bytes);
}

TEST_CASE("label file with n=1 and no payload is Truncated") {
    std::vector<std::uint8_t> bytes = {'L', 'B', 'L', '1'};
    put_u32(bytes, 1);
    CHECK(error_kind([&] { decode_labels(bytes); }) == ErrorKind::Truncated);
    bytes[3] = '2';
    CHECK(error_kind([&] { decode_labels(bytes); }) == ErrorKind::BadMagic);
}

TEST_CASE("label file round trip") {
    TempDir dir;
    LabelVector labels{{3, 1, 4, 1, 5, 9, 2, 6}, {}};
    write_labels(labels, dir / "l.lbl");
    CHECK(read_labels(dir / "l.lbl") == labels);
}

TEST_CASE("manifest round trip resolves relative paths against its own directory") {
    TempDir dir;
    std::filesystem::create_directories(dir / "sub");
    const EmbeddingMatrix m(4, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1});
    write_embeddings(m, dir / "sub/x.emb");
    write_labels({{0, 1, 2, 0}, {}}, dir / "sub/x.lbl");
    write_labels({{0, 1, 1, 0}, {}}, dir / "sub/x.pred.lbl");

    DatasetManifest manifest;
    manifest.name = "x";
    manifest.embeddings_path = dir / "sub/x.emb";
    manifest.labels_path = dir / "sub/x.lbl";
    manifest.predictions_path = dir / "sub/x.pred.lbl";
    manifest.model_id = "m0";
    manifest.seed = 42;
    manifest.notes = "unit test";
    write_manifest(manifest, dir / "sub/x.manifest.json");

    const auto read = read_manifest(dir / "sub/x.manifest.json");
    CHECK(read.name == "x");
    CHECK(read.model_id == "m0");
    CHECK(read.seed == 42);
    CHECK(read.notes == "unit test");
    CHECK(std::filesystem::equivalent(read.embeddings_path, dir / "sub/x.emb"));

    const auto ds = load_dataset(dir / "sub/x.manifest.json");
    CHECK(ds.embeddings == m);
    REQUIRE(ds.labels);
    CHECK(ds.labels->labels == std::vector<std::uint32_t>{0, 1, 2, 0});
    REQUIRE(ds.predictions);
    CHECK(ds.predictions->labels == std::vector<std::uint32_t>{0, 1, 1, 0});
}

TEST_CASE("dataset with mismatched label count is rejected") {
    TempDir dir;
    write_embeddings(EmbeddingMatrix(2, 1, {1, 2}), dir / "x.emb");
    write_labels({{0, 1, 0}, {}}, dir / "x.lbl");
    DatasetManifest manifest;
    manifest.name = "x";
    manifest.embeddings_path = dir / "x.emb";
    manifest.labels_path = dir / "x.lbl";
    write_manifest(manifest, dir / "x.manifest.json");
    CHECK(error_kind([&] { load_dataset(dir / "x.manifest.json"); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("image_shape must match the embedding dimension") {
    TempDir dir;
    write_embeddings(EmbeddingMatrix(1, 6, {1, 2, 3, 4, 5, 6}), dir / "x.emb");
    DatasetManifest manifest;
    manifest.name = "x";
    manifest.embeddings_path = dir / "x.emb";
    manifest.image_shape = std::make_pair<std::size_t, std::size_t>(2, 3);
    write_manifest(manifest, dir / "x.manifest.json");
    CHECK(load_dataset(dir / "x.manifest.json").manifest.image_shape == std::make_pair<std::size_t, std::size_t>(2, 3));
    manifest.image_shape = std::make_pair<std::size_t, std::size_t>(2, 2);
    write_manifest(manifest, dir / "x.manifest.json");
    CHECK(error_kind([&] { load_dataset(dir / "x.manifest.json"); }) == ErrorKind::ShapeMismatch);
}

}  // TEST_SUITE

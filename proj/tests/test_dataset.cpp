#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dear/dataset.hpp"

using namespace dear;
namespace fs = std::filesystem;

namespace {

Image smooth_test_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, 3);
    for (int c = 0; c < 3; ++c) {
        const double fy = rng.uniform(0.5, 2.0), fx = rng.uniform(0.5, 2.0);
        const double py = rng.uniform(0.0, 6.28), px = rng.uniform(0.0, 6.28);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(y, x, c) =
                    0.5 + 0.4 * std::sin(fy * 6.283 * y / h + py) * std::cos(fx * 6.283 * x / w + px);
    }
    return img;
}

std::vector<unsigned char> slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("mask generator determinism and coverage") {
    // zero window -> empty mask
    Mask empty = generate_irregular_mask(32, 32, 5, 0.0, 0.0);
    CHECK(empty.coverage() == 0.0);

    // same seed twice -> bit-identical
    Mask a = generate_irregular_mask(64, 64, 7, 0.2, 0.4);
    Mask b = generate_irregular_mask(64, 64, 7, 0.2, 0.4);
    CHECK(a.data == b.data);

    // requested window reached
    Mask c = generate_irregular_mask(64, 64, 3, 0.2, 0.4);
    CHECK(c.coverage() >= 0.2);
    CHECK(c.coverage() <= 0.4);

    CHECK_THROWS_AS(generate_irregular_mask(32, 32, 1, 0.5, 0.4), invalid_argument_error);
    CHECK_THROWS_AS(generate_irregular_mask(32, 32, 1, 0.2, 0.95), invalid_argument_error);
}

TEST_CASE("mask generator lands in range for 100 consecutive seeds") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Mask m = generate_irregular_mask(64, 64, seed, 0.2, 0.4);
        CHECK(m.coverage() >= 0.2);
        CHECK(m.coverage() <= 0.4);
        Mask m2 = generate_irregular_mask(32, 32, seed, 0.1, 0.3);
        CHECK(m2.coverage() >= 0.1);
        CHECK(m2.coverage() <= 0.3);
    }
}

TEST_CASE("dataset build round trip, determinism, and record invariants") {
    fs::path root = fs::temp_directory_path() / "dear_ds_test";
    fs::remove_all(root);
    fs::create_directories(root / "hr");

    for (int i = 0; i < 3; ++i)
        write_image(smooth_test_image(32, 32, 100 + uint64_t(i)),
                    (root / "hr" / ("img" + std::to_string(i) + ".png")).string());

    const std::string out1 = (root / "out1").string();
    const std::string out2 = (root / "out2").string();
    MaskSource src = MaskSource::generator(0.1, 0.4);
    std::string manifest1 = build_dataset((root / "hr").string(), out1, 4, src, 42, 2);
    std::string manifest2 = build_dataset((root / "hr").string(), out2, 4, src, 42, 1);

    // reproducible bytes across runs and worker counts (manifest differs only
    // in paths, so compare the sample files)
    for (const auto& e1 : load_manifest(manifest1)) {
        fs::path rel = fs::path(e1.lr_clean_path).filename();
        CHECK(slurp(e1.lr_clean_path) == slurp((fs::path(out2) / rel).string()));
    }

    auto entries = load_manifest(manifest1);
    REQUIRE(entries.size() == 3);
    for (const auto& e : entries) {
        SampleRecord rec = load_record(e);
        CHECK(rec.lr_clean.height == 8);
        CHECK(rec.lr_clean.width == 8);
        CHECK(rec.hr.height == 32);
        CHECK(rec.scale == 4.0);
        validate_record(rec);  // lr_masked == lr_clean * (1-M) after reload
    }

    // dimension mismatch raises
    write_image(smooth_test_image(30, 30, 1), (root / "hr" / "bad.png").string());
    CHECK_THROWS_AS(build_dataset((root / "hr").string(), (root / "out3").string(), 4, src, 1, 1),
                    invalid_argument_error);
    fs::remove_all(root);
}

TEST_CASE("external mask directory is resampled and binarized") {
    fs::path root = fs::temp_directory_path() / "dear_ds_ext";
    fs::remove_all(root);
    fs::create_directories(root / "hr");
    fs::create_directories(root / "masks");

    write_image(smooth_test_image(32, 32, 9), (root / "hr" / "a.png").string());
    Mask big(64, 64);
    for (int y = 16; y < 48; ++y)
        for (int x = 16; x < 48; ++x) big.at(y, x) = 1;
    write_mask(big, (root / "masks" / "m.png").string());

    MaskSource src = MaskSource::from_directory((root / "masks").string());
    std::string manifest = build_dataset((root / "hr").string(), (root / "out").string(), 4, src, 0, 1);
    SampleRecord rec = load_record(load_manifest(manifest)[0]);
    CHECK(rec.lr_masked.mask.height == 8);
    // center block of the 64x64 mask covers the center of the 8x8 grid
    CHECK(rec.lr_masked.mask.at(4, 4) == 1);
    CHECK(rec.lr_masked.mask.at(0, 0) == 0);
    validate_record(rec);
    fs::remove_all(root);
}

TEST_CASE("query sampling: exhaustive, deterministic, colors match") {
    fs::path root = fs::temp_directory_path() / "dear_ds_q";
    fs::remove_all(root);
    fs::create_directories(root);

    SampleRecord rec;
    rec.id = "t";
    rec.hr = smooth_test_image(8, 8, 77);
    rec.lr_clean = downsample(rec.hr, 2);
    rec.lr_masked = apply_mask(rec.lr_clean, Mask(4, 4));
    rec.scale = 2.0;

    // n = sH*sW hits every pixel exactly once
    Rng rng(1);
    QuerySet all = sample_queries(rec, 64, rng);
    std::vector<int> seen(64, 0);
    for (int i = 0; i < 64; ++i) {
        const int y = nearest_pixel(all.coords[size_t(i) * 2], 8);
        const int x = nearest_pixel(all.coords[size_t(i) * 2 + 1], 8);
        seen[size_t(y * 8 + x)]++;
        for (int c = 0; c < 3; ++c)
            CHECK(all.colors[size_t(i) * 3 + c] == rec.hr.at(y, x, c));
    }
    for (int s : seen) CHECK(s == 1);

    // fixed rng -> deterministic selection
    Rng r1(99), r2(99);
    QuerySet q1 = sample_queries(rec, 10, r1);
    QuerySet q2 = sample_queries(rec, 10, r2);
    CHECK(q1.coords == q2.coords);
    CHECK(q1.colors == q2.colors);

    CHECK_THROWS_AS(sample_queries(rec, 65, rng), invalid_argument_error);
    fs::remove_all(root);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dear/metrics.hpp"
#include "support.hpp"

using namespace dear;
using testsup::smooth_image;

namespace {

// Independent PSNR oracle: Kahan-compensated MSE accumulation.
double oracle_psnr(const Image& a, const Image& b) {
    double sum = 0.0, comp = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        const double term = d * d - comp;
        const double t = sum + term;
        comp = (t - sum) - term;
        sum = t;
    }
    const double mse = sum / double(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// Independent SSIM oracle: direct per-window evaluation, no separability.
double oracle_ssim(const Image& a, const Image& b, int n = 11, double k1 = 0.01,
                   double k2 = 0.03) {
    std::vector<double> g(static_cast<size_t>(n));
    const double c = (n - 1) / 2.0;
    double gsum = 0.0;
    for (int i = 0; i < n; ++i) {
        g[size_t(i)] = std::exp(-(i - c) * (i - c) / (2.0 * 1.5 * 1.5));
        gsum += g[size_t(i)];
    }
    for (auto& v : g) v /= gsum;
    const double c1 = k1 * k1, c2 = k2 * k2;

    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        double acc = 0.0;
        int count = 0;
        for (int y = 0; y + n <= a.height; ++y)
            for (int x = 0; x + n <= a.width; ++x) {
                double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double wij = g[size_t(i)] * g[size_t(j)];
                        const double va = a.at(y + i, x + j, ch);
                        const double vb = b.at(y + i, x + j, ch);
                        ma += wij * va;
                        mb += wij * vb;
                        maa += wij * va * va;
                        mbb += wij * vb * vb;
                        mab += wij * va * vb;
                    }
                const double va = maa - ma * ma, vb = mbb - mb * mb, vab = mab - ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * vab + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        total += acc / count;
    }
    return total / a.channels;
}

double oracle_l1(const Image& a, const Image& b) {
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    return sum / double(a.data.size());
}

Image noisy_copy(const Image& src, uint64_t seed, double amp) {
    Rng rng(seed);
    Image out = src;
    for (auto& v : out.data) v = clamp01(v + rng.uniform(-amp, amp));
    return out;
}

}  // namespace

TEST_CASE("psnr: identical images cap at 99 dB, constant offset 0.1 gives 20 dB") {
    Image a(16, 16, 3);
    for (auto& v : a.data) v = 0.4;
    CHECK(psnr(a, a) == 99.0);

    Image b = a;
    for (auto& v : b.data) v = 0.5;
    Image zero(16, 16, 3);
    Image tenth(16, 16, 3);
    for (auto& v : tenth.data) v = 0.1;
    CHECK(std::abs(psnr(zero, tenth) - 20.0) < 1e-9);
}

TEST_CASE("metric oracles agree on 100 random pairs") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 12 + int(rng.next_u64() % 10);
        const int w = 12 + int(rng.next_u64() % 10);
        Image a(h, w, 3);
        for (auto& v : a.data) v = rng.uniform();
        Image b(h, w, 3);
        for (auto& v : b.data) v = rng.uniform();

        CHECK(std::abs(psnr(a, b) - oracle_psnr(a, b)) <= 1e-9);
        CHECK(std::abs(ssim(a, b) - oracle_ssim(a, b)) <= 1e-7);
        CHECK(l1_metric(a, b) == oracle_l1(a, b));
    }
}

TEST_CASE("ssim: identical images give exactly 1, symmetric arguments") {
    Image a = smooth_image(32, 32, 9);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Image b = noisy_copy(a, 11, 0.2);
    CHECK(ssim(a, b) == ssim(b, a));
}

TEST_CASE("ssim of two constants matches the zero-variance closed form") {
    const double va = 0.4, vb = 0.5;
    Image a(32, 32, 3), b(32, 32, 3);
    for (auto& v : a.data) v = va;
    for (auto& v : b.data) v = vb;
    const double c1 = 0.01 * 0.01;
    const double want = (2.0 * va * vb + c1) / (va * va + vb * vb + c1);
    CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS_AS(ssim(Image(8, 8, 1), Image(8, 8, 1)), invalid_argument_error);
}

TEST_CASE("l1 metric: identical images give zero") {
    Image a = smooth_image(16, 16, 13);
    CHECK(l1_metric(a, a) == 0.0);
}

TEST_CASE("psnr_region restricts the error support") {
    Image a(8, 8, 3), b(8, 8, 3);
    // difference only inside the region
    Mask region(8, 8);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) region.at(y, x) = 1;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) b.at(y, x, c) = 0.1;
    CHECK(std::abs(psnr_region(a, b, region) - 20.0) < 1e-9);
    // outside the region the images agree, so whole-image PSNR is higher
    CHECK(psnr(a, b) > psnr_region(a, b, region));
}

TEST_CASE("evaluate produces per-image rows plus their mean, and writes CSV") {
    namespace fs = std::filesystem;
    fs::path root = fs::temp_directory_path() / "dear_eval_test";
    fs::remove_all(root);
    fs::create_directories(root / "hr");
    for (int i = 0; i < 3; ++i)
        write_image(smooth_image(32, 32, 50 + uint64_t(i)),
                    (root / "hr" / ("e" + std::to_string(i) + ".png")).string());
    const std::string manifest =
        build_dataset((root / "hr").string(), (root / "data").string(), 4,
                      MaskSource::generator(0.1, 0.3), 3, 1);
    auto entries = load_manifest(manifest);

    // restore = upscale the clean LR (a weak but deterministic restorer)
    auto restore = [](const SampleRecord& rec) {
        return resize_bicubic(rec.lr_clean, rec.hr.height, rec.hr.width);
    };
    MetricReport rep = evaluate(restore, "bicubic_clean", entries, 4.0, 2);
    REQUIRE(rep.rows.size() == 3);
    MetricValues mean;
    for (const auto& row : rep.rows) {
        mean.psnr += row.values.psnr;
        mean.ssim += row.values.ssim;
        mean.l1 += row.values.l1;
        CHECK(row.lpips == "n/a");
    }
    CHECK(rep.aggregate.psnr == doctest::Approx(mean.psnr / 3).epsilon(1e-12));
    CHECK(rep.aggregate.ssim == doctest::Approx(mean.ssim / 3).epsilon(1e-12));
    CHECK(rep.aggregate.l1 == doctest::Approx(mean.l1 / 3).epsilon(1e-12));

    // determinism
    MetricReport rep2 = evaluate(restore, "bicubic_clean", entries, 4.0, 1);
    for (size_t i = 0; i < rep.rows.size(); ++i)
        CHECK(rep.rows[i].values.psnr == rep2.rows[i].values.psnr);

    const std::string csv = (root / "report.csv").string();
    write_report_csv(rep, csv);
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "id,psnr,ssim,l1,lpips");
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 4);  // 3 rows + aggregate

    // wrong scale refuses to compare against mismatched ground truth
    CHECK_THROWS_AS(evaluate(restore, "x", entries, 2.0, 1), invalid_argument_error);
    fs::remove_all(root);
}

TEST_CASE("lpips hook runs an external scorer when provided") {
    namespace fs = std::filesystem;
    fs::path root = fs::temp_directory_path() / "dear_lpips_test";
    fs::remove_all(root);
    fs::create_directories(root / "hr");
    write_image(smooth_image(32, 32, 60), (root / "hr" / "a.png").string());
    const std::string manifest =
        build_dataset((root / "hr").string(), (root / "data").string(), 4,
                      MaskSource::generator(0.1, 0.3), 3, 1);

    const std::string script = (root / "fake_lpips.sh").string();
    {
        std::ofstream s(script);
        s << "#!/bin/sh\necho 0.125\n";
    }
    fs::permissions(script, fs::perms::owner_all);

    auto restore = [](const SampleRecord& rec) {
        return resize_bicubic(rec.lr_clean, rec.hr.height, rec.hr.width);
    };
    MetricReport rep = evaluate(restore, "m", load_manifest(manifest), 4.0, 1, script);
    CHECK(rep.rows[0].lpips == "0.125000");
    fs::remove_all(root);
}

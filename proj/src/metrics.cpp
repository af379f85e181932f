#include "dear/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace dear {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels)
        throw invalid_argument_error(std::string(who) + ": image shapes differ");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    const double mse = sum / double(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double psnr_region(const Image& a, const Image& b, const Mask& region) {
    require_same_shape(a, b, "psnr_region");
    if (region.height != a.height || region.width != a.width)
        throw invalid_argument_error("psnr_region: region size mismatch");
    double sum = 0.0;
    int64_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!region.at(y, x)) continue;
            for (int c = 0; c < a.channels; ++c) {
                const double d = a.at(y, x, c) - b.at(y, x, c);
                sum += d * d;
                ++n;
            }
        }
    if (n == 0) throw invalid_argument_error("psnr_region: empty region");
    const double mse = sum / double(n);
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> gaussian_window(int n, double sigma) {
    std::vector<double> w(static_cast<size_t>(n));
    const double c = (n - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        w[size_t(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += w[size_t(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// separable valid-region filtering of one channel plane
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& win) {
    const int n = int(win.size());
    const int oh = h - n + 1, ow = w - n + 1;
    std::vector<double> mid(size_t(h) * size_t(ow));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < n; ++t) acc += win[size_t(t)] * src[size_t(y) * w + x + t];
            mid[size_t(y) * ow + x] = acc;
        }
    std::vector<double> out(size_t(oh) * size_t(ow));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < n; ++t) acc += win[size_t(t)] * mid[size_t(y + t) * ow + x];
            out[size_t(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, int window, double k1, double k2) {
    require_same_shape(a, b, "ssim");
    if (a.height < window || a.width < window)
        throw invalid_argument_error("ssim: image smaller than the window");
    const std::vector<double> win = gaussian_window(window, 1.5);
    const double c1 = k1 * k1, c2 = k2 * k2;
    const int h = a.height, w = a.width;
    const size_t plane = size_t(h) * size_t(w);

    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        std::vector<double> pa(plane), pb(plane), paa(plane), pbb(plane), pab(plane);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double va = a.at(y, x, ch), vb = b.at(y, x, ch);
                const size_t i = size_t(y) * w + size_t(x);
                pa[i] = va;
                pb[i] = vb;
                paa[i] = va * va;
                pbb[i] = vb * vb;
                pab[i] = va * vb;
            }
        const auto mu_a = filter_valid(pa, h, w, win);
        const auto mu_b = filter_valid(pb, h, w, win);
        const auto m_aa = filter_valid(paa, h, w, win);
        const auto m_bb = filter_valid(pbb, h, w, win);
        const auto m_ab = filter_valid(pab, h, w, win);
        double acc = 0.0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = m_aa[i] - ma * ma;
            const double vb = m_bb[i] - mb * mb;
            const double vab = m_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * vab + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / double(mu_a.size());
    }
    return total / a.channels;
}

double l1_metric(const Image& a, const Image& b) {
    require_same_shape(a, b, "l1_metric");
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    return sum / double(a.data.size());
}

namespace {

std::string run_lpips(const std::string& cmd, const std::string& pa, const std::string& pb) {
    const std::string full = cmd + " " + pa + " " + pb;
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) return "n/a";
    char buf[256];
    std::string out;
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    const int rc = pclose(pipe);
    if (rc != 0) return "n/a";
    try {
        const double v = std::stod(out);
        char fmt[64];
        std::snprintf(fmt, sizeof fmt, "%.6f", v);
        return fmt;
    } catch (...) {
        return "n/a";
    }
}

}  // namespace

MetricReport evaluate(const RestoreFn& restore, const std::string& model_id,
                      const std::vector<ManifestEntry>& entries, double scale, int workers,
                      const std::string& lpips_cmd) {
    MetricReport report;
    report.model_id = model_id;
    report.scale = scale;
    report.rows.resize(entries.size());
    std::vector<std::string> errors(entries.size());

    namespace fs = std::filesystem;
    fs::path tmpdir;
    if (!lpips_cmd.empty()) {
        tmpdir = fs::temp_directory_path() /
                 ("dear_lpips_" + std::to_string(uint64_t(::getpid())));
        fs::create_directories(tmpdir);
    }

    parallel_for(int64_t(entries.size()), workers, [&](int64_t i) {
        try {
            SampleRecord rec = load_record(entries[size_t(i)]);
            const int want_h = int(std::floor(scale * rec.lr_clean.height));
            const int want_w = int(std::floor(scale * rec.lr_clean.width));
            if (want_h != rec.hr.height || want_w != rec.hr.width)
                throw invalid_argument_error(
                    "evaluate: scale " + std::to_string(scale) +
                    " does not reproduce the ground-truth resolution of record " + rec.id);
            Image restored = restore(rec);
            if (restored.height != rec.hr.height || restored.width != rec.hr.width)
                throw invalid_argument_error("evaluate: restored size mismatch for " + rec.id);
            MetricRow& row = report.rows[size_t(i)];
            row.id = rec.id;
            row.values.psnr = psnr(restored, rec.hr);
            row.values.ssim = ssim(restored, rec.hr);
            row.values.l1 = l1_metric(restored, rec.hr);
            if (!lpips_cmd.empty()) {
                const std::string pa = (tmpdir / (rec.id + "_restored.png")).string();
                const std::string pb = (tmpdir / (rec.id + "_ref.png")).string();
                write_image(restored, pa);
                write_image(rec.hr, pb);
                row.lpips = run_lpips(lpips_cmd, pa, pb);
            }
        } catch (const std::exception& ex) {
            errors[size_t(i)] = ex.what();
        }
    });
    if (!tmpdir.empty()) fs::remove_all(tmpdir);
    for (const auto& err : errors)
        if (!err.empty()) throw invalid_argument_error(err);

    for (const auto& row : report.rows) {
        report.aggregate.psnr += row.values.psnr;
        report.aggregate.ssim += row.values.ssim;
        report.aggregate.l1 += row.values.l1;
    }
    const double n = double(report.rows.size());
    report.aggregate.psnr /= n;
    report.aggregate.ssim /= n;
    report.aggregate.l1 /= n;
    return report;
}

void write_report_csv(const MetricReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write report: " + path);
    char buf[256];
    out << "id,psnr,ssim,l1,lpips\n";
    for (const auto& row : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.8f,%s\n", row.id.c_str(),
                      row.values.psnr, row.values.ssim, row.values.l1, row.lpips.c_str());
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "aggregate,%.6f,%.6f,%.8f,n/a\n", report.aggregate.psnr,
                  report.aggregate.ssim, report.aggregate.l1);
    out << buf;
}

}  // namespace dear

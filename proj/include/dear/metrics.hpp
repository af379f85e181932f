#ifndef DEAR_METRICS_HPP
#define DEAR_METRICS_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dear/dataset.hpp"

namespace dear {

// Peak signal-to-noise ratio in dB over [0,1] images; identical inputs are
// reported as the 99 dB cap.
double psnr(const Image& a, const Image& b);

// Mean SSIM over all channels with an 11x11 Gaussian window (sigma 1.5),
// evaluated where the window fits entirely inside the image.
double ssim(const Image& a, const Image& b, int window = 11, double k1 = 0.01,
            double k2 = 0.03);

double l1_metric(const Image& a, const Image& b);

// PSNR restricted to pixels where `region` is 1 (used for masked-area
// quality checks); region must match the image size.
double psnr_region(const Image& a, const Image& b, const Mask& region);

struct MetricValues {
    double psnr = 0.0;
    double ssim = 0.0;
    double l1 = 0.0;
};

struct MetricRow {
    std::string id;
    MetricValues values;
    std::string lpips = "n/a";
};

struct MetricReport {
    std::string model_id;
    double scale = 0.0;
    std::vector<MetricRow> rows;
    MetricValues aggregate;  // mean of the per-image rows
};

// Renders every manifest record through `restore` and scores it against the
// HR ground truth. When lpips_cmd is set, it is invoked as
// `cmd <restored.png> <reference.png>` and its stdout is recorded per image.
using RestoreFn = std::function<Image(const SampleRecord&)>;
MetricReport evaluate(const RestoreFn& restore, const std::string& model_id,
                      const std::vector<ManifestEntry>& entries, double scale, int workers = 1,
                      const std::string& lpips_cmd = "");

void write_report_csv(const MetricReport& report, const std::string& path);

}  // namespace dear

#endif  // DEAR_METRICS_HPP

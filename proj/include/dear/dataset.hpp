#ifndef DEAR_DATASET_HPP
#define DEAR_DATASET_HPP

#include <optional>
#include <string>
#include <vector>

#include "dear/imaging.hpp"

namespace dear {

// Free-form mask from random thick strokes and ellipses. Deterministic for a
// fixed seed; achieved coverage lands inside [lo, hi]. The degenerate window
// (0, 0) yields the empty mask.
Mask generate_irregular_mask(int height, int width, uint64_t seed, double lo, double hi);

struct MaskSource {
    enum class Kind { kGenerator, kDirectory } kind = Kind::kGenerator;
    double coverage_lo = 0.1;
    double coverage_hi = 0.4;
    std::string directory;  // binary mask PNGs; resampled (nearest) to LR size

    static MaskSource generator(double lo, double hi) {
        MaskSource s;
        s.kind = Kind::kGenerator;
        s.coverage_lo = lo;
        s.coverage_hi = hi;
        return s;
    }
    static MaskSource from_directory(std::string dir) {
        MaskSource s;
        s.kind = Kind::kDirectory;
        s.directory = std::move(dir);
        return s;
    }
};

struct ManifestEntry {
    std::string id;
    std::string hr_path;
    std::string lr_clean_path;
    std::string lr_masked_path;
    std::string mask_path;
    double scale = 0.0;
};

struct SampleRecord {
    std::string id;
    Image hr;
    Image lr_clean;
    MaskedImage lr_masked;
    double scale = 0.0;
};

// Writes per-sample {lr_clean, lr_masked, mask} PNGs plus manifest.jsonl and
// meta.json under out_dir. Reruns with equal inputs are byte-identical.
// Returns the manifest path.
std::string build_dataset(const std::string& hr_dir, const std::string& out_dir, int scale,
                          const MaskSource& masks, uint64_t seed, int workers = 1);

std::vector<ManifestEntry> load_manifest(const std::string& manifest_path);
SampleRecord load_record(const ManifestEntry& entry);
// Checks the stored-record invariants (shapes, zero-filled masked pixels).
void validate_record(const SampleRecord& rec);

// Uniform sample of HR pixel centers (without replacement) and their colors.
struct QuerySet {
    std::vector<double> coords;  // 2*n, (y, x) in [-1,1]
    std::vector<double> colors;  // 3*n
    int count = 0;
};
QuerySet sample_queries(const SampleRecord& rec, int n_queries, Rng& rng);

// Full-grid queries for an arbitrary output resolution (used by rendering
// and by evaluation at non-dataset scales).
QuerySet grid_queries(const Image& hr, int out_h, int out_w);

struct TrainBatch {
    std::vector<const SampleRecord*> records;
    std::vector<QuerySet> queries;
};

}  // namespace dear

#endif  // DEAR_DATASET_HPP

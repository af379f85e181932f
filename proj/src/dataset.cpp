#include "dear/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace dear {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<std::string> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw invalid_argument_error("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

Mask nearest_resize_mask(const Mask& src, int oh, int ow) {
    Mask out(oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const int sy = std::min(src.height - 1, int((y + 0.5) * src.height / oh));
            const int sx = std::min(src.width - 1, int((x + 0.5) * src.width / ow));
            out.at(y, x) = src.at(sy, sx);
        }
    return out;
}

}  // namespace

std::string build_dataset(const std::string& hr_dir, const std::string& out_dir, int scale,
                          const MaskSource& masks, uint64_t seed, int workers) {
    if (scale < 2) throw invalid_argument_error("build_dataset: scale must be >= 2");
    const std::vector<std::string> hr_files = list_pngs(hr_dir);
    if (hr_files.empty()) throw invalid_argument_error("build_dataset: no PNG files in " + hr_dir);

    std::vector<std::string> mask_files;
    if (masks.kind == MaskSource::Kind::kDirectory) {
        mask_files = list_pngs(masks.directory);
        if (mask_files.empty())
            throw invalid_argument_error("build_dataset: no mask PNGs in " + masks.directory);
    }

    fs::create_directories(out_dir);
    const int n = int(hr_files.size());
    std::vector<ManifestEntry> entries(static_cast<size_t>(n));
    std::vector<std::string> errors(static_cast<size_t>(n));

    parallel_for(n, workers, [&](int64_t i) {
        try {
            const std::string& hp = hr_files[size_t(i)];
            const std::string id = fs::path(hp).stem().string();
            Image hr = read_image(hp);
            if (hr.height % scale != 0 || hr.width % scale != 0)
                throw invalid_argument_error("HR dimensions not divisible by scale: " + hp);
            Image lr = downsample(hr, scale);

            Mask mask;
            if (masks.kind == MaskSource::Kind::kGenerator) {
                mask = generate_irregular_mask(lr.height, lr.width, mix_seed(seed, uint64_t(i)),
                                               masks.coverage_lo, masks.coverage_hi);
            } else {
                Mask raw = read_mask(mask_files[size_t(i) % mask_files.size()]);
                mask = nearest_resize_mask(raw, lr.height, lr.width);
            }
            MaskedImage lm = apply_mask(lr, mask);

            ManifestEntry e;
            e.id = id;
            e.hr_path = hp;
            e.lr_clean_path = (fs::path(out_dir) / (id + "_lr_clean.png")).string();
            e.lr_masked_path = (fs::path(out_dir) / (id + "_lr_masked.png")).string();
            e.mask_path = (fs::path(out_dir) / (id + "_mask.png")).string();
            e.scale = double(scale);
            write_image(lr, e.lr_clean_path);
            write_image(lm.raster, e.lr_masked_path);
            write_mask(mask, e.mask_path);
            entries[size_t(i)] = std::move(e);
        } catch (const std::exception& ex) {
            errors[size_t(i)] = ex.what();
        }
    });
    for (const auto& err : errors)
        if (!err.empty()) throw invalid_argument_error("build_dataset: " + err);

    const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
    {
        std::ofstream out(manifest_path, std::ios::trunc);
        if (!out) throw io_error("cannot write " + manifest_path);
        for (const auto& e : entries) {
            ordered_json j;
            j["id"] = e.id;
            j["hr_path"] = e.hr_path;
            j["lr_clean_path"] = e.lr_clean_path;
            j["lr_masked_path"] = e.lr_masked_path;
            j["mask_path"] = e.mask_path;
            j["scale"] = e.scale;
            out << j.dump() << "\n";
        }
    }
    {
        ordered_json meta;
        meta["seed"] = seed;
        meta["scale"] = scale;
        meta["count"] = n;
        meta["mask_source"] =
            masks.kind == MaskSource::Kind::kGenerator ? "generator" : masks.directory;
        if (masks.kind == MaskSource::Kind::kGenerator) {
            meta["coverage_lo"] = masks.coverage_lo;
            meta["coverage_hi"] = masks.coverage_hi;
        }
        std::ofstream out((fs::path(out_dir) / "meta.json").string(), std::ios::trunc);
        out << meta.dump(2) << "\n";
    }
    return manifest_path;
}

std::vector<ManifestEntry> load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw io_error("cannot open manifest: " + manifest_path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        ManifestEntry e;
        e.id = j.at("id").get<std::string>();
        e.hr_path = j.at("hr_path").get<std::string>();
        e.lr_clean_path = j.at("lr_clean_path").get<std::string>();
        e.lr_masked_path = j.at("lr_masked_path").get<std::string>();
        e.mask_path = j.at("mask_path").get<std::string>();
        e.scale = j.at("scale").get<double>();
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw invalid_argument_error("empty manifest: " + manifest_path);
    return entries;
}

SampleRecord load_record(const ManifestEntry& entry) {
    SampleRecord rec;
    rec.id = entry.id;
    rec.hr = read_image(entry.hr_path);
    rec.lr_clean = read_image(entry.lr_clean_path);
    Mask mask = read_mask(entry.mask_path);
    rec.lr_masked.raster = read_image(entry.lr_masked_path);
    rec.lr_masked.mask = mask;
    rec.scale = entry.scale;
    return rec;
}

void validate_record(const SampleRecord& rec) {
    const Image& lr = rec.lr_clean;
    const Mask& m = rec.lr_masked.mask;
    if (lr.height != m.height || lr.width != m.width)
        throw invalid_argument_error("record " + rec.id + ": mask/LR shape mismatch");
    if (rec.lr_masked.raster.height != lr.height || rec.lr_masked.raster.width != lr.width)
        throw invalid_argument_error("record " + rec.id + ": masked/clean shape mismatch");
    for (int y = 0; y < lr.height; ++y)
        for (int x = 0; x < lr.width; ++x)
            for (int c = 0; c < lr.channels; ++c) {
                const double want = m.at(y, x) ? 0.0 : lr.at(y, x, c);
                if (rec.lr_masked.raster.at(y, x, c) != want)
                    throw invalid_argument_error("record " + rec.id +
                                                 ": masked raster violates lr_clean*(1-M)");
            }
}

QuerySet sample_queries(const SampleRecord& rec, int n_queries, Rng& rng) {
    const int sh = rec.hr.height, sw = rec.hr.width;
    const int64_t total = int64_t(sh) * sw;
    if (n_queries < 1 || n_queries > total)
        throw invalid_argument_error("sample_queries: n_queries out of range");

    // partial Fisher-Yates over pixel indices
    std::vector<int> pool(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) pool[size_t(i)] = int(i);
    QuerySet qs;
    qs.count = n_queries;
    qs.coords.resize(size_t(n_queries) * 2);
    qs.colors.resize(size_t(n_queries) * 3);
    for (int i = 0; i < n_queries; ++i) {
        const int j = i + int(rng.next_u64() % uint64_t(total - i));
        std::swap(pool[size_t(i)], pool[size_t(j)]);
        const int idx = pool[size_t(i)];
        const int y = idx / sw, x = idx % sw;
        qs.coords[size_t(i) * 2] = pixel_center_coord(y, sh);
        qs.coords[size_t(i) * 2 + 1] = pixel_center_coord(x, sw);
        for (int c = 0; c < 3; ++c) qs.colors[size_t(i) * 3 + c] = rec.hr.at(y, x, c);
    }
    return qs;
}

QuerySet grid_queries(const Image& hr, int out_h, int out_w) {
    QuerySet qs;
    qs.count = out_h * out_w;
    qs.coords.resize(size_t(qs.count) * 2);
    qs.colors.resize(size_t(qs.count) * 3);
    size_t k = 0;
    for (int y = 0; y < out_h; ++y) {
        const double cy = pixel_center_coord(y, out_h);
        for (int x = 0; x < out_w; ++x) {
            qs.coords[k * 2] = cy;
            qs.coords[k * 2 + 1] = pixel_center_coord(x, out_w);
            if (hr.height == out_h && hr.width == out_w)
                for (int c = 0; c < 3; ++c) qs.colors[k * 3 + c] = hr.at(y, x, c);
            ++k;
        }
    }
    return qs;
}

}  // namespace dear

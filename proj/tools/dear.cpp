// Command-line entry point binding the dataset builder, trainer, evaluator,
// renderer, and the invariant selftest.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "dear/baselines.hpp"
#include "dear/dataset.hpp"
#include "dear/metrics.hpp"
#include "dear/model.hpp"
#include "dear/selfcheck.hpp"
#include "dear/trainer.hpp"

namespace fs = std::filesystem;
using namespace dear;

namespace {

struct DatasetArgs {
    std::string hr_dir, out_dir, mask_mode = "gen", mask_dir;
    int scale = 4;
    double coverage_lo = 0.1, coverage_hi = 0.4;
    uint64_t seed = 0;
    int workers = 1;
};

struct TrainArgs {
    std::string config_path, manifest, out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

struct ResumeArgs {
    std::string checkpoint, out_dir, manifest;
    uint64_t seed = 0;
};

struct EvalArgs {
    std::string model_ckpt, baseline, manifest, out_csv = "report.csv", lpips_cmd;
    double scale = 4.0;
    int workers = 1, chunk = 16384;
    uint64_t seed = 0;
};

struct InferArgs {
    std::string model_ckpt, input_png, mask_png, out_png, dump_importance;
    double scale = 4.0;
    int chunk = 16384, workers = 1;
    uint64_t seed = 0;
};

int run_dataset(const DatasetArgs& a) {
    MaskSource src = a.mask_mode == "dir" ? MaskSource::from_directory(a.mask_dir)
                                          : MaskSource::generator(a.coverage_lo, a.coverage_hi);
    if (a.mask_mode == "dir" && a.mask_dir.empty())
        throw invalid_argument_error("--mask dir requires --mask-dir");
    const std::string manifest =
        build_dataset(a.hr_dir, a.out_dir, a.scale, src, a.seed, a.workers);
    std::cout << "manifest: " << manifest << "\n";
    return kExitOk;
}

int run_train(const TrainArgs& a) {
    TrainConfig cfg = TrainConfig::from_file(a.config_path);
    if (a.seed_set) cfg.seed = a.seed;
    if (a.workers > 0) cfg.workers = a.workers;
    TrainResult res = train(cfg, a.manifest, a.out_dir);
    std::cout << "parameters: " << res.param_count << "\n";
    std::cout << "checkpoint: " << res.checkpoint_path << "\n";
    if (!res.log.empty()) {
        const auto& last = res.log.back();
        std::printf("final epoch %d: total=%.6f l1_hr=%.6f l1_lr=%.6f\n", last.epoch,
                    last.total, last.l1_hr, last.l1_lr);
    }
    return kExitOk;
}

int run_resume(const ResumeArgs& a) {
    TrainResult res = resume(a.checkpoint, a.out_dir, a.manifest);
    std::cout << "checkpoint: " << res.checkpoint_path << "\n";
    return kExitOk;
}

int run_eval(const EvalArgs& a) {
    if (a.model_ckpt.empty() == a.baseline.empty())
        throw invalid_argument_error("eval: give exactly one of --model or --baseline");
    auto entries = load_manifest(a.manifest);

    RestoreFn restore;
    std::string id;
    std::unique_ptr<Model> model;
    if (!a.model_ckpt.empty()) {
        Checkpoint ck = load_checkpoint(a.model_ckpt);
        model = std::make_unique<Model>(ck.config.model, std::move(ck.bank));
        id = "model:" + fs::path(a.model_ckpt).filename().string();
        const double s = a.scale;
        const int chunk = a.chunk;
        Model* mp = model.get();
        restore = [mp, s, chunk](const SampleRecord& rec) {
            return mp->render(rec.lr_masked, s, chunk, 1);
        };
    } else if (a.baseline == "bi_then_inpaint") {
        id = "baseline:bi_then_inpaint";
        const double s = a.scale;
        restore = [s](const SampleRecord& rec) {
            return stack_pipeline(rec.lr_masked, StackOrder::kSrFirst, s);
        };
    } else if (a.baseline == "inpaint_then_bi") {
        id = "baseline:inpaint_then_bi";
        const double s = a.scale;
        restore = [s](const SampleRecord& rec) {
            return stack_pipeline(rec.lr_masked, StackOrder::kInpaintFirst, s);
        };
    } else {
        throw invalid_argument_error("eval: unknown baseline '" + a.baseline +
                                     "' (expected bi_then_inpaint or inpaint_then_bi)");
    }

    MetricReport rep = evaluate(restore, id, entries, a.scale, a.workers, a.lpips_cmd);
    write_report_csv(rep, a.out_csv);
    std::printf("%s @ x%g: psnr=%.3f ssim=%.4f l1=%.5f (%zu images) -> %s\n", id.c_str(),
                a.scale, rep.aggregate.psnr, rep.aggregate.ssim, rep.aggregate.l1,
                rep.rows.size(), a.out_csv.c_str());
    return kExitOk;
}

int run_infer(const InferArgs& a) {
    Checkpoint ck = load_checkpoint(a.model_ckpt);
    Model model(ck.config.model, std::move(ck.bank));
    Image input = read_image(a.input_png);
    Mask mask = a.mask_png.empty() ? Mask(input.height, input.width) : read_mask(a.mask_png);
    MaskedImage masked = apply_mask(input, mask);
    Image out = model.render(masked, a.scale, a.chunk, a.workers);
    write_image(out, a.out_png);
    std::cout << "wrote " << a.out_png << " (" << out.height << "x" << out.width << ")\n";
    if (!a.dump_importance.empty()) {
        write_image(model.importance_image(masked), a.dump_importance);
        std::cout << "wrote " << a.dump_importance << "\n";
    }
    return kExitOk;
}

int run_selftest() {
    auto results = run_selfchecks();
    bool all = true;
    std::printf("%-45s  %s\n", "check", "result");
    for (const auto& r : results) {
        std::printf("%-45s  %s%s%s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                    r.detail.empty() ? "" : "  ", r.detail.c_str());
        all = all && r.pass;
    }
    return all ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masked low-resolution image completion with continuous-scale rendering"};
    app.require_subcommand(0, 1);

    bool version = false;
    app.add_flag("--version", version, "print the checkpoint format version");

    DatasetArgs da;
    auto* ds = app.add_subcommand("dataset", "build paired {masked LR, clean LR, HR} samples");
    ds->add_option("--hr-dir", da.hr_dir, "directory of HR PNGs")->required();
    ds->add_option("--out", da.out_dir, "output dataset directory")->required();
    ds->add_option("--scale", da.scale, "integer downsampling factor")->required();
    ds->add_option("--mask", da.mask_mode, "mask source: gen or dir")
        ->check(CLI::IsMember({"gen", "dir"}));
    ds->add_option("--mask-dir", da.mask_dir, "directory of mask PNGs (with --mask dir)");
    ds->add_option("--coverage-lo", da.coverage_lo, "minimum mask coverage fraction");
    ds->add_option("--coverage-hi", da.coverage_hi, "maximum mask coverage fraction");
    ds->add_option("--seed", da.seed, "mask generator seed");
    ds->add_option("--workers", da.workers, "parallel workers");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train a model from a dataset manifest");
    tr->add_option("--config", ta.config_path, "flat key=value config file")->required();
    tr->add_option("--data", ta.manifest, "dataset manifest (jsonl)")->required();
    tr->add_option("--out", ta.out_dir, "output directory")->required();
    auto* seed_opt = tr->add_option("--seed", ta.seed, "override the config seed");
    tr->add_option("--workers", ta.workers, "override the config worker count");

    ResumeArgs ra;
    auto* rs = app.add_subcommand("resume", "continue training from a checkpoint");
    rs->add_option("--checkpoint", ra.checkpoint, "checkpoint file")->required();
    rs->add_option("--out", ra.out_dir, "output directory")->required();
    rs->add_option("--data", ra.manifest, "manifest override");
    rs->add_option("--seed", ra.seed, "unused (seed is stored in the checkpoint)");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "score a model or baseline against ground truth");
    ev->add_option("--model", ea.model_ckpt, "model checkpoint");
    ev->add_option("--baseline", ea.baseline, "bi_then_inpaint or inpaint_then_bi");
    ev->add_option("--data", ea.manifest, "dataset manifest")->required();
    ev->add_option("--scale", ea.scale, "upscale ratio")->required();
    ev->add_option("--out", ea.out_csv, "report CSV path");
    ev->add_option("--lpips-cmd", ea.lpips_cmd, "external perceptual scorer executable");
    ev->add_option("--workers", ea.workers, "parallel workers");
    ev->add_option("--chunk-size", ea.chunk, "query chunk size for rendering");
    ev->add_option("--seed", ea.seed, "unused (evaluation is deterministic)");

    InferArgs ia;
    auto* in = app.add_subcommand("infer", "complete and upscale one image");
    in->add_option("--model", ia.model_ckpt, "model checkpoint")->required();
    in->add_option("--input", ia.input_png, "input PNG (RGB)")->required();
    in->add_option("--mask", ia.mask_png, "mask PNG (white = missing)");
    in->add_option("--scale", ia.scale, "upscale ratio >= 1")->required();
    in->add_option("--out", ia.out_png, "output PNG")->required();
    in->add_option("--chunk-size", ia.chunk, "query chunk size");
    in->add_option("--dump-importance", ia.dump_importance,
                   "write the importance map as a grayscale PNG");
    in->add_option("--workers", ia.workers, "parallel workers");
    in->add_option("--seed", ia.seed, "unused (inference is deterministic)");

    auto* st = app.add_subcommand("selftest", "run the invariant suite");
    uint64_t st_seed = 0;
    st->add_option("--seed", st_seed, "unused (checks are seeded internally)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitInvalidArgument;
    }

    try {
        if (version) {
            std::cout << "checkpoint format version " << kCheckpointFormatVersion << "\n";
            return kExitOk;
        }
        ta.seed_set = seed_opt->count() > 0;
        if (ds->parsed()) return run_dataset(da);
        if (tr->parsed()) return run_train(ta);
        if (rs->parsed()) return run_resume(ra);
        if (ev->parsed()) return run_eval(ea);
        if (in->parsed()) return run_infer(ia);
        if (st->parsed()) return run_selftest();
        std::cout << app.help() << "\n";
        return kExitOk;
    } catch (const divergence_error& e) {
        std::cerr << "error (divergence): " << e.what() << "\n";
        return kExitDivergence;
    } catch (const resource_limit_error& e) {
        std::cerr << "error (resource limit): " << e.what() << "\n";
        return kExitResourceLimit;
    } catch (const io_error& e) {
        std::cerr << "error (i/o): " << e.what() << "\n";
        return kExitIo;
    } catch (const invalid_argument_error& e) {
        std::cerr << "error (invalid argument): " << e.what() << "\n";
        return kExitInvalidArgument;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

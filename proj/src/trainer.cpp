#include "dear/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace dear {

namespace fs = std::filesystem;
using ad::Graph;
using ad::Tensor;
using ad::VarId;

// ---------------- config text ----------------

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    throw invalid_argument_error("config: bad boolean value '" + s + "'");
}

}  // namespace

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out << "lr = " << fmt_double(lr) << "\n";
    out << "beta1 = " << fmt_double(beta1) << "\n";
    out << "beta2 = " << fmt_double(beta2) << "\n";
    out << "eps = " << fmt_double(eps) << "\n";
    out << "epochs = " << epochs << "\n";
    out << "lr_halve_every = " << lr_halve_every << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "l2_weight = " << fmt_double(l2_weight) << "\n";
    out << "n_queries = " << n_queries << "\n";
    out << "seed = " << seed << "\n";
    out << "workers = " << workers << "\n";
    out << "grad_clip = " << fmt_double(grad_clip) << "\n";
    out << "checkpoint_every = " << checkpoint_every << "\n";
    out << "multi_scale = " << (multi_scale ? "true" : "false") << "\n";
    out << "mask_channel = " << (model.mask_channel ? "true" : "false") << "\n";
    out << "latent_channels = " << model.latent_channels << "\n";
    out << "feature_channels = " << model.feature_channels << "\n";
    out << "n_resblocks = " << model.n_resblocks << "\n";
    out << "latent_kernel = " << model.latent_kernel << "\n";
    out << "recon_kernel = " << model.recon_kernel << "\n";
    out << "mlp_hidden = " << model.mlp_hidden << "\n";
    out << "detail_enhance = " << (model.detail_enhance ? "true" : "false") << "\n";
    out << "unmask_attention = " << (model.unmask_attention ? "true" : "false") << "\n";
    out << "importance = " << (model.importance ? "true" : "false") << "\n";
    out << "highpass_delta_form = " << (model.highpass_delta_form ? "true" : "false") << "\n";
    out << "attention_budget = " << model.attention_budget << "\n";
    out << "attention_key_stride = " << model.attention_key_stride << "\n";
    out << "ensemble_invdist = " << (model.ensemble_invdist ? "true" : "false") << "\n";
    return out.str();
}

TrainConfig TrainConfig::from_string(const std::string& text) {
    TrainConfig cfg;
    for (const auto& [key, val] : parse_kv(text)) {
        if (key == "lr") cfg.lr = std::stod(val);
        else if (key == "beta1") cfg.beta1 = std::stod(val);
        else if (key == "beta2") cfg.beta2 = std::stod(val);
        else if (key == "eps") cfg.eps = std::stod(val);
        else if (key == "epochs") cfg.epochs = std::stoi(val);
        else if (key == "lr_halve_every") cfg.lr_halve_every = std::stoi(val);
        else if (key == "batch_size") cfg.batch_size = std::stoi(val);
        else if (key == "l2_weight") cfg.l2_weight = std::stod(val);
        else if (key == "n_queries") cfg.n_queries = std::stoi(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "workers") cfg.workers = std::stoi(val);
        else if (key == "grad_clip") cfg.grad_clip = std::stod(val);
        else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
        else if (key == "multi_scale") cfg.multi_scale = parse_bool(val);
        else if (key == "mask_channel") cfg.model.mask_channel = parse_bool(val);
        else if (key == "latent_channels") cfg.model.latent_channels = std::stoi(val);
        else if (key == "feature_channels") cfg.model.feature_channels = std::stoi(val);
        else if (key == "n_resblocks") cfg.model.n_resblocks = std::stoi(val);
        else if (key == "latent_kernel") cfg.model.latent_kernel = std::stoi(val);
        else if (key == "recon_kernel") cfg.model.recon_kernel = std::stoi(val);
        else if (key == "mlp_hidden") cfg.model.mlp_hidden = std::stoi(val);
        else if (key == "detail_enhance") cfg.model.detail_enhance = parse_bool(val);
        else if (key == "unmask_attention") cfg.model.unmask_attention = parse_bool(val);
        else if (key == "importance") cfg.model.importance = parse_bool(val);
        else if (key == "highpass_delta_form") cfg.model.highpass_delta_form = parse_bool(val);
        else if (key == "attention_budget") cfg.model.attention_budget = std::stoi(val);
        else if (key == "attention_key_stride") cfg.model.attention_key_stride = std::stoi(val);
        else if (key == "ensemble_invdist") cfg.model.ensemble_invdist = parse_bool(val);
        else throw invalid_argument_error("config: unknown key '" + key + "'");
    }
    if (cfg.l2_weight < 0.0) throw invalid_argument_error("config: l2_weight must be >= 0");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.n_queries < 1 || cfg.lr_halve_every < 1)
        throw invalid_argument_error("config: counts must be positive");
    return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str());
}

double schedule_lr(const TrainConfig& cfg, int epoch) {
    return cfg.lr * std::pow(0.5, double(epoch / cfg.lr_halve_every));
}

// ---------------- loss ----------------

LossValues compute_loss(const Model& model, const TrainBatch& batch, double l2_weight,
                        std::vector<Tensor>* grad_accum, int workers) {
    const int n = int(batch.records.size());
    if (n == 0 || batch.queries.size() != size_t(n))
        throw invalid_argument_error("compute_loss: malformed batch");
    const bool with_recon = model.config().importance;

    struct ItemOut {
        LossValues loss;
        std::vector<Tensor> grads;
    };
    std::vector<ItemOut> items(static_cast<size_t>(n));

    parallel_for(n, workers, [&](int64_t i) {
        const SampleRecord& rec = *batch.records[size_t(i)];
        const QuerySet& qs = batch.queries[size_t(i)];

        Graph g;
        BoundParams p = model.bind(g);
        Model::Maps maps = model.forward_maps(g, p, rec.lr_masked);
        QueryBatch qb = build_queries(rec.lr_clean.height, rec.lr_clean.width, qs.coords,
                                      model.config().ensemble_invdist);
        VarId pred = model.predict_colors(g, p, maps, qb);

        Tensor target({qs.count, 3});
        target.data = qs.colors;
        VarId l1_hr = g.mean_abs_diff(pred, std::move(target));

        VarId total = l1_hr;
        double l1_lr_value = 0.0;
        if (with_recon) {
            VarId l1_lr = g.mean_abs_diff(maps.recon, Model::rgb_planes(rec.lr_clean));
            l1_lr_value = g.val(l1_lr).data[0];
            total = g.add_scaled(l1_hr, l1_lr, l2_weight);
        }

        ItemOut& out = items[size_t(i)];
        out.loss.l1_hr = g.val(l1_hr).data[0];
        out.loss.l1_lr = l1_lr_value;
        out.loss.total = g.val(total).data[0];
        if (grad_accum) {
            g.backward(total);
            out.grads.reserve(p.vars.size());
            for (VarId id : p.vars) out.grads.push_back(g.grad_of(id));
        }
    });

    LossValues sum;
    for (int i = 0; i < n; ++i) {
        sum.total += items[size_t(i)].loss.total;
        sum.l1_hr += items[size_t(i)].loss.l1_hr;
        sum.l1_lr += items[size_t(i)].loss.l1_lr;
    }
    sum.total /= n;
    sum.l1_hr /= n;
    sum.l1_lr /= n;
    if (!std::isfinite(sum.total))
        throw divergence_error("compute_loss: non-finite loss (total=" +
                               std::to_string(sum.total) + ", l1_hr=" +
                               std::to_string(sum.l1_hr) + ", l1_lr=" +
                               std::to_string(sum.l1_lr) + ")");

    if (grad_accum) {
        const auto& bank = model.bank();
        if (grad_accum->empty())
            for (const auto& t : bank.tensors) grad_accum->push_back(Tensor(t.shape));
        const double inv = 1.0 / n;
        for (size_t pi = 0; pi < bank.tensors.size(); ++pi) {
            Tensor& dst = (*grad_accum)[pi];
            for (int i = 0; i < n; ++i) {
                const Tensor& src = items[size_t(i)].grads[pi];
                for (int64_t k = 0; k < dst.numel(); ++k)
                    dst.data[size_t(k)] += inv * src.data[size_t(k)];
            }
        }
    }
    return sum;
}

void adam_step(ParamBank& bank, AdamState& st, const std::vector<Tensor>& grads,
               const TrainConfig& cfg, double lr) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    double clip_scale = 1.0;
    if (cfg.grad_clip > 0.0) {
        double norm_sq = 0.0;
        for (const auto& gt : grads)
            for (double v : gt.data) norm_sq += v * v;
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
    }
    for (size_t pi = 0; pi < bank.tensors.size(); ++pi) {
        Tensor& theta = bank.tensors[pi];
        Tensor& m = st.m[pi];
        Tensor& v = st.v[pi];
        const Tensor& gt = grads[pi];
        for (int64_t k = 0; k < theta.numel(); ++k) {
            const double g = gt.data[size_t(k)] * clip_scale;
            m.data[size_t(k)] = cfg.beta1 * m.data[size_t(k)] + (1.0 - cfg.beta1) * g;
            v.data[size_t(k)] = cfg.beta2 * v.data[size_t(k)] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m.data[size_t(k)] / bc1;
            const double vhat = v.data[size_t(k)] / bc2;
            theta.data[size_t(k)] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ---------------- training loop ----------------

namespace {

// stream tags for independent deterministic substreams
constexpr uint64_t kStreamShuffle = 0x53484642ULL;
constexpr uint64_t kStreamQueries = 0x51554552ULL;
constexpr uint64_t kStreamScale = 0x5343414cULL;

QuerySet queries_for(const SampleRecord& rec, const TrainConfig& cfg, int epoch, int image_index,
                     double scale_draw) {
    Rng rng(mix_seed(mix_seed(cfg.seed, kStreamQueries), mix_seed(uint64_t(epoch),
                                                                  uint64_t(image_index))));
    if (!cfg.multi_scale) {
        const int total = rec.hr.height * rec.hr.width;
        return sample_queries(rec, std::min(cfg.n_queries, total), rng);
    }
    // experimental extension: train against a resampled target grid of scale
    // s' in [1, dataset scale]
    const double s = 1.0 + scale_draw * (rec.scale - 1.0);
    const int oh = std::max(rec.lr_clean.height, int(std::floor(s * rec.lr_clean.height)));
    const int ow = std::max(rec.lr_clean.width, int(std::floor(s * rec.lr_clean.width)));
    Image target = resize_bicubic(rec.hr, oh, ow);
    SampleRecord tmp;
    tmp.hr = std::move(target);
    const int total = oh * ow;
    return sample_queries(tmp, std::min(cfg.n_queries, total), rng);
}

std::string ckpt_path(const std::string& out_dir, int next_epoch) {
    return (fs::path(out_dir) / ("ckpt_epoch_" + std::to_string(next_epoch) + ".bin")).string();
}

TrainResult train_impl(TrainConfig cfg, const std::string& manifest_path,
                       const std::string& out_dir, Model model, AdamState adam,
                       int start_epoch) {
    fs::create_directories(out_dir);
    const auto entries = load_manifest(manifest_path);
    std::vector<SampleRecord> records;
    records.reserve(entries.size());
    for (const auto& e : entries) records.push_back(load_record(e));
    const int n = int(records.size());

    const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream csv;
    if (start_epoch == 0) {
        csv.open(csv_path, std::ios::trunc);
        csv << "epoch,total,l1_hr,l1_lr,lr,wall_s\n";
    } else {
        csv.open(csv_path, std::ios::app);
    }
    if (!csv) throw io_error("cannot open " + csv_path);

    TrainResult result;
    result.param_count = model.param_count();

    std::vector<int> kept_ckpts;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = schedule_lr(cfg, epoch);

        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[size_t(i)] = i;
        Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, kStreamShuffle), uint64_t(epoch)));
        for (int i = n - 1; i > 0; --i) {
            const int j = int(shuffle_rng.next_u64() % uint64_t(i + 1));
            std::swap(order[size_t(i)], order[size_t(j)]);
        }

        LossValues epoch_sum;
        int steps = 0;
        for (int base = 0; base < n; base += cfg.batch_size) {
            const int bsz = std::min(cfg.batch_size, n - base);
            Rng scale_rng(mix_seed(mix_seed(cfg.seed, kStreamScale),
                                   mix_seed(uint64_t(epoch), uint64_t(base))));
            const double scale_draw = scale_rng.uniform();
            TrainBatch batch;
            for (int k = 0; k < bsz; ++k) {
                const int idx = order[size_t(base + k)];
                batch.records.push_back(&records[size_t(idx)]);
                batch.queries.push_back(
                    queries_for(records[size_t(idx)], cfg, epoch, idx, scale_draw));
            }
            std::vector<Tensor> grads;
            LossValues loss;
            try {
                loss = compute_loss(model, batch, cfg.l2_weight, &grads, cfg.workers);
            } catch (const divergence_error&) {
                std::ofstream dump((fs::path(out_dir) / "divergence.txt").string());
                dump << "epoch " << epoch << " step " << steps << "\n";
                for (size_t pi = 0; pi < model.bank().names.size(); ++pi) {
                    double norm = 0.0;
                    for (double v : model.bank().tensors[pi].data) norm += v * v;
                    dump << model.bank().names[pi] << " l2=" << std::sqrt(norm) << "\n";
                }
                throw;
            }
            adam_step(model.bank(), adam, grads, cfg, lr);
            epoch_sum.total += loss.total;
            epoch_sum.l1_hr += loss.l1_hr;
            epoch_sum.l1_lr += loss.l1_lr;
            ++steps;
        }

        EpochStats st;
        st.epoch = epoch;
        st.total = epoch_sum.total / steps;
        st.l1_hr = epoch_sum.l1_hr / steps;
        st.l1_lr = epoch_sum.l1_lr / steps;
        st.lr = lr;
        st.wall_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(st);
        csv << st.epoch << "," << fmt_double(st.total) << "," << fmt_double(st.l1_hr) << ","
            << fmt_double(st.l1_lr) << "," << fmt_double(st.lr) << ","
            << fmt_double(st.wall_s) << "\n";
        csv.flush();

        const bool last = (epoch + 1 == cfg.epochs);
        if ((epoch + 1) % cfg.checkpoint_every == 0 || last) {
            Checkpoint ck;
            ck.config = cfg;
            ck.bank = model.bank();
            ck.adam = adam;
            ck.next_epoch = epoch + 1;
            ck.manifest_path = manifest_path;
            const std::string path = ckpt_path(out_dir, epoch + 1);
            save_checkpoint(ck, path);
            kept_ckpts.push_back(epoch + 1);
            if (kept_ckpts.size() > 2) {
                fs::remove(ckpt_path(out_dir, kept_ckpts.front()));
                kept_ckpts.erase(kept_ckpts.begin());
            }
            result.checkpoint_path = path;
        }
    }
    return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& manifest_path,
                  const std::string& out_dir) {
    Model model(cfg.model, cfg.seed);
    AdamState adam = AdamState::for_bank(model.bank());
    return train_impl(cfg, manifest_path, out_dir, std::move(model), std::move(adam), 0);
}

TrainResult resume(const std::string& checkpoint_path, const std::string& out_dir,
                   const std::string& manifest_override) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    const std::string manifest =
        manifest_override.empty() ? ck.manifest_path : manifest_override;
    Model model(ck.config.model, std::move(ck.bank));
    return train_impl(ck.config, manifest, out_dir, std::move(model), std::move(ck.adam),
                      ck.next_epoch);
}

}  // namespace dear

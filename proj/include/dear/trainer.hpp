#ifndef DEAR_TRAINER_HPP
#define DEAR_TRAINER_HPP

#include <string>
#include <vector>

#include "dear/dataset.hpp"
#include "dear/model.hpp"

namespace dear {

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 200;
    int lr_halve_every = 100;  // learning rate halves every this many epochs
    int batch_size = 16;
    double l2_weight = 0.01;   // weight of the LR reconstruction term
    int n_queries = 2048;      // sampled HR pixels per image per step
    uint64_t seed = 0;
    int workers = 1;
    double grad_clip = 0.0;    // global-norm clip; 0 disables
    int checkpoint_every = 1;  // epochs between checkpoints (last two kept)
    bool multi_scale = false;  // experimental: sample the target scale per batch
    ModelConfig model;

    static TrainConfig from_file(const std::string& path);
    static TrainConfig from_string(const std::string& text);
    std::string to_text() const;
};

// lr * 0.5^floor(epoch / halve_every)
double schedule_lr(const TrainConfig& cfg, int epoch);

struct LossValues {
    double total = 0.0;
    double l1_hr = 0.0;
    double l1_lr = 0.0;
};

// Mean absolute errors over the batch: HR-query colors against ground truth
// plus the weighted LR reconstruction term (zero when the importance branch
// is off). When `grad_accum` is given, parameter gradients (averaged over
// batch items) are accumulated into it. Throws divergence_error on
// non-finite losses.
LossValues compute_loss(const Model& model, const TrainBatch& batch, double l2_weight,
                        std::vector<ad::Tensor>* grad_accum = nullptr, int workers = 1);

struct AdamState {
    std::vector<ad::Tensor> m;
    std::vector<ad::Tensor> v;
    int64_t t = 0;

    static AdamState for_bank(const ParamBank& bank) {
        AdamState st;
        for (const auto& p : bank.tensors) {
            st.m.push_back(ad::Tensor(p.shape));
            st.v.push_back(ad::Tensor(p.shape));
        }
        return st;
    }
};

void adam_step(ParamBank& bank, AdamState& st, const std::vector<ad::Tensor>& grads,
               const TrainConfig& cfg, double lr);

struct EpochStats {
    int epoch = 0;
    double total = 0.0;
    double l1_hr = 0.0;
    double l1_lr = 0.0;
    double lr = 0.0;
    double wall_s = 0.0;
};

struct Checkpoint {
    TrainConfig config;
    ParamBank bank;
    AdamState adam;
    int next_epoch = 0;
    std::string manifest_path;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
    std::string checkpoint_path;
    std::vector<EpochStats> log;
    int64_t param_count = 0;
};

// Runs the full schedule; writes metrics.csv and rolling checkpoints under
// out_dir. Deterministic loss sequence for a fixed seed (any worker count:
// per-item gradients are reduced in batch order).
TrainResult train(const TrainConfig& cfg, const std::string& manifest_path,
                  const std::string& out_dir);

// Continues an interrupted run from its checkpoint. The stored config and
// manifest are reused unless overridden.
TrainResult resume(const std::string& checkpoint_path, const std::string& out_dir,
                   const std::string& manifest_override = "");

}  // namespace dear

#endif  // DEAR_TRAINER_HPP

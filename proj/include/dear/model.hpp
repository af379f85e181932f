#ifndef DEAR_MODEL_HPP
#define DEAR_MODEL_HPP

#include <string>
#include <vector>

#include "dear/autodiff.hpp"
#include "dear/imaging.hpp"

namespace dear {

// Architecture sizes and component toggles. The three toggles mirror the
// ablation lineup: detail enhancement (adaptive high-pass filtering of the
// latent), unmask attention, and the pixel-wise importance branch.
struct ModelConfig {
    bool mask_channel = true;    // feed the mask as a fourth input plane
    int latent_channels = 64;    // encoder latent width
    int feature_channels = 64;   // decoded per-pixel embedding width
    int n_resblocks = 8;
    int latent_kernel = 3;       // element-wise filter size on the latent
    int recon_kernel = 3;        // per-pixel reconstruction kernel size
    int mlp_hidden = 256;
    bool detail_enhance = true;  // DSE
    bool unmask_attention = true;  // USE
    bool importance = true;        // PIM
    bool highpass_delta_form = false;  // high-pass = delta - lowpass instead of 1 - lowpass
    int attention_budget = 4096;       // max LR pixel count for the HWxHW attention matrix
    int attention_key_stride = 1;      // >1 subsamples the key/value pixels (memory fallback)
    bool ensemble_invdist = false;     // inverse-distance ensemble weights instead of area rule

    int input_channels() const { return mask_channel ? 4 : 3; }
    int mlp_input_dim() const { return 2 * feature_channels + 3; }
};

// Named parameter tensors in a fixed registration order (the order defines
// checkpoint layout and the init stream).
struct ParamBank {
    std::vector<std::string> names;
    std::vector<ad::Tensor> tensors;

    int add(std::string name, ad::Tensor t) {
        names.push_back(std::move(name));
        tensors.push_back(std::move(t));
        return int(names.size()) - 1;
    }
    int index_of(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return int(i);
        return -1;
    }
    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& t : tensors) n += t.numel();
        return n;
    }
};

// Graph-bound view of a ParamBank: vars[i] is the leaf for tensors[i].
struct BoundParams {
    std::vector<ad::VarId> vars;
};

// Continuous queries against an LR lattice: 4 surrounding pixel centers per
// query, their signed offsets scaled by the grid spacing, and normalized
// ensemble weights.
struct QueryBatch {
    std::vector<double> q_coords;      // 2N (y,x)
    std::vector<int> neighbor_idx;     // 4N row indices into the HW lattice
    std::vector<double> rel_offsets;   // 8N (dy,dx) per neighbor
    std::vector<double> weights;       // 4N, each query's 4 weights sum to 1
    int count = 0;
};

QueryBatch build_queries(int lr_h, int lr_w, const std::vector<double>& q_coords,
                         bool invdist = false);

class Model {
public:
    Model(ModelConfig cfg, uint64_t seed);
    Model(ModelConfig cfg, ParamBank bank);

    const ModelConfig& config() const { return cfg_; }
    ParamBank& bank() { return bank_; }
    const ParamBank& bank() const { return bank_; }
    int64_t param_count() const { return bank_.total_params(); }

    BoundParams bind(ad::Graph& g) const;

    // ---- feature extraction ----
    // input planes: [3 or 4][H][W] (masked RGB + optional mask plane)
    static ad::Tensor input_planes(const ModelConfig& cfg, const MaskedImage& input);
    static ad::Tensor rgb_planes(const Image& img);

    // encoder latent [Cz][ceil(H/4)][ceil(W/4)]
    ad::VarId encode(ad::Graph& g, const BoundParams& p, ad::VarId input) const;
    // filter-branch latent (same architecture, independent parameters)
    ad::VarId filter_latent(ad::Graph& g, const BoundParams& p, ad::VarId input) const;
    // low-pass field [Cz*Kz^2][hz][wz]: softmax over each kernel group
    ad::VarId predict_lowpass(ad::Graph& g, const BoundParams& p, ad::VarId flt_latent) const;
    ad::VarId highpass_from_lowpass(ad::Graph& g, ad::VarId lowpass) const;
    // decoder to full resolution: [C][out_h][out_w]
    ad::VarId decode(ad::Graph& g, const BoundParams& p, ad::VarId z_hat, int out_h,
                     int out_w) const;
    // composition; bypasses the filter when detail enhancement is off
    ad::VarId extract_features(ad::Graph& g, const BoundParams& p, ad::VarId input, int h,
                               int w) const;

    // ---- unmask attention ----
    static ad::VarId mask_feature_rows(ad::Graph& g, ad::VarId f_rows, const Mask& mask);
    ad::VarId unmask_attend(ad::Graph& g, ad::VarId f_rows, const Mask& mask) const;

    // ---- importance branch ----
    ad::VarId predict_recon_kernels(ad::Graph& g, const BoundParams& p, ad::VarId flt_latent,
                                    int h, int w) const;
    ad::VarId reconstruct_lr(ad::Graph& g, ad::VarId kernels, ad::Tensor masked_rgb) const;
    ad::VarId importance_map(ad::Graph& g, const BoundParams& p, ad::VarId kernels) const;

    // ---- full forward ----
    struct Maps {
        ad::VarId f_rows = -1;  // [HW][C]
        ad::VarId e_rows = -1;  // [HW][C] (= f_rows when attention is off)
        ad::VarId w_rows = -1;  // [HW][1]
        ad::VarId w_map = -1;   // [1][H][W]; -1 when importance is off
        ad::VarId recon = -1;   // [3][H][W]; -1 when importance is off
        int h = 0, w = 0;
    };
    Maps forward_maps(ad::Graph& g, const BoundParams& p, const MaskedImage& input) const;

    // ---- implicit decoder ----
    // per-neighbor predictions [4N][3]
    ad::VarId per_neighbor_colors(ad::Graph& g, const BoundParams& p, const Maps& maps,
                                  const QueryBatch& qb) const;
    // ensemble output [N][3]
    ad::VarId predict_colors(ad::Graph& g, const BoundParams& p, const Maps& maps,
                             const QueryBatch& qb) const;

    // Renders the completed image at an arbitrary scale >= 1. Queries are
    // evaluated in chunks of `chunk` to bound memory.
    Image render(const MaskedImage& input, double scale, int chunk = 16384,
                 int workers = 1) const;
    Image render_grid(const MaskedImage& input, int out_h, int out_w, int chunk = 16384,
                      int workers = 1) const;

    // Importance map as a grayscale image (all-ones when the branch is off).
    Image importance_image(const MaskedImage& input) const;

private:
    ad::VarId trunk(ad::Graph& g, const BoundParams& p, const std::string& prefix,
                    ad::VarId input) const;
    ad::VarId mlp(ad::Graph& g, const BoundParams& p, ad::VarId rows) const;

    ModelConfig cfg_;
    ParamBank bank_;
};

}  // namespace dear

#endif  // DEAR_MODEL_HPP

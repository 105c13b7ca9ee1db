#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tta/common.hpp"
#include "tta/dataset.hpp"

namespace tta {

enum class BnMode { RunningStats, BatchStats };
enum class HeadKind { Classification, Regression };

// BN variance floor: every normalization divides by sqrt(var + kBnEps).
inline constexpr double kBnEps = 1e-5;

struct TaskHead {
    HeadKind kind = HeadKind::Regression;
    int horizon = 1;
    int out_dim() const { return kind == HeadKind::Classification ? 2 : horizon; }
};

// Network geometry; immutable after construction.
struct ArchDescriptor {
    int input_channels = 7;
    int hidden = 64;
    int blocks = 3;
    int kernel = 3;
    std::vector<int> dilations = {1, 2, 4};  // one per block

    void validate() const;
    bool operator==(const ArchDescriptor&) const = default;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 512;
    int max_epochs = 100;
    int patience = 10;
    double weight_decay = 1e-2;   // AdamW, applied to conv/head weight matrices only
    double bn_momentum = 0.1;     // running-stat accumulation during training
    std::uint64_t seed = 0;

    void validate() const;
};

// Elementwise BN transform with explicit moments; writes h = (u-mu)/sigma and
// y = gamma*h + beta. sigma must already be floored.
void bn_apply(const double* u, std::size_t n, double mu, double sigma, double gamma, double beta,
              double* h_out, double* y_out);

// d(loss)/d(gamma) = sum g*h, d(loss)/d(beta) = sum g over the n elements of
// one channel.
void grad_bn_affine(const double* upstream, const double* h, std::size_t n, double& d_gamma,
                    double& d_beta);

struct BnCache {
    std::vector<double> h;         // normalized activations [B][C][L]
    std::vector<double> mean;      // per channel, the moments actually used
    std::vector<double> inv_std;   // 1/sqrt(var+eps)
};

struct ForwardCache {
    BnMode mode = BnMode::RunningStats;
    std::size_t batch = 0;
    std::vector<std::vector<double>> x;    // block inputs x[0..blocks], [B][C][L]
    std::vector<std::vector<double>> mid;  // per block: post-ReLU activation between the two convs
    std::vector<BnCache> bn;               // 2 per block, block-major
    std::vector<double> pooled;            // [B][hidden]
};

struct ForwardResult {
    std::vector<double> output;  // [B][out_dim]: logits (classification) or per-step values
    std::vector<double> probs;   // [B][2] softmax probabilities; empty for regression
    ForwardCache cache;          // populated when requested
    bool has_cache = false;
};

// Multi-scale residual TCN: per block two causal dilated convolutions each
// followed by temporal batch norm (normalized over batch x time per channel),
// a projection skip on the first block, global average pooling over time and
// a linear head.
class Backbone {
public:
    Backbone() = default;
    Backbone(ArchDescriptor arch, TaskHead head, std::uint64_t init_seed);

    const ArchDescriptor& arch() const { return arch_; }
    const TaskHead& head() const { return head_; }
    std::uint64_t init_seed() const { return init_seed_; }

    ForwardResult forward(const WindowBatch& batch, BnMode mode, bool want_cache = false) const;

    // Training-mode forward: BN uses batch moments and running stats are
    // updated in place with the given momentum.
    ForwardResult forward_train(const WindowBatch& batch, double momentum, bool want_cache = true);

    // Replaces every BN layer's running moments with the current batch's
    // per-channel moments (single batch-stat forward, no gradients).
    void refresh_bn_stats(const WindowBatch& batch);

    // Gradient of a scalar loss w.r.t. the BN affine subset phi, given
    // d(loss)/d(output) as a [B][out_dim] array. All other parameter
    // gradients are discarded.
    std::vector<double> backward_phi(const ForwardCache& cache,
                                     const std::vector<double>& d_output) const;

    // Full gradient over every trainable parameter (training only).
    std::vector<double> backward_all(const ForwardCache& cache,
                                     const std::vector<double>& d_output) const;

    // --- parameter vector views -------------------------------------------
    std::size_t phi_dim() const;        // 2 x total BN channels
    std::vector<double> phi() const;    // [gamma..., beta...] per BN layer, block-major
    void set_phi(const std::vector<double>& flat);

    std::size_t trainable_dim() const;
    std::vector<double> trainable() const;
    void set_trainable(const std::vector<double>& flat);
    std::vector<bool> weight_decay_mask() const;  // true for conv/head weight matrices

    // Everything, including BN running statistics (teacher EMA, checkpoints).
    std::vector<double> all_values() const;
    void set_all_values(const std::vector<double>& flat);

    std::size_t bn_layer_count() const { return bn_.size(); }
    int bn_channels() const { return arch_.hidden; }
    const std::vector<double>& bn_running_mean(std::size_t layer) const;
    const std::vector<double>& bn_running_var(std::size_t layer) const;
    std::vector<double> bn_running_std(std::size_t layer) const;  // sqrt(var + eps)
    const std::vector<double>& bn_gamma(std::size_t layer) const { return bn_[layer].gamma; }
    const std::vector<double>& bn_beta(std::size_t layer) const { return bn_[layer].beta; }
    void set_bn_affine(std::size_t layer, std::vector<double> gamma, std::vector<double> beta);

private:
    struct Conv {
        int in_ch = 0, out_ch = 0, kernel = 1, dilation = 1;
        std::vector<double> w;  // [out][in][k]
        std::vector<double> b;  // [out]
    };
    struct Bn {
        std::vector<double> gamma, beta;
        std::vector<double> run_mean, run_var;
    };

    void check_batch(const WindowBatch& batch) const;
    ForwardResult run_forward(const WindowBatch& batch, BnMode mode, bool want_cache,
                              bool update_running, double momentum);
    void backward_impl(const ForwardCache& cache, const std::vector<double>& d_output,
                       std::vector<double>* full_grad, std::vector<double>* phi_grad) const;
    std::vector<std::size_t> trainable_offsets() const;

    ArchDescriptor arch_;
    TaskHead head_;
    std::uint64_t init_seed_ = 0;
    std::vector<Conv> convs_;  // 2 per block: block-major [conv1, conv2]*blocks
    Conv skip_;                // 1x1 projection for block 0
    std::vector<Bn> bn_;       // 2 per block
    std::vector<double> head_w_;  // [out_dim][hidden]
    std::vector<double> head_b_;  // [out_dim]

    friend struct CheckpointIo;
};

struct TrainResult {
    double best_metric = 0.0;  // validation AUC (classification) or MSE (regression)
    int best_epoch = -1;
    int epochs_run = 0;
    std::vector<double> metric_history;
};

// Supervised pretraining with AdamW; returns the parameters at the best
// validation epoch (the net argument is left at that checkpoint).
TrainResult train_supervised(Backbone& net, const WindowDataset& ds, const TrainConfig& cfg);

// Versioned checkpoint: params + architecture + scaler + training seed.
// save -> load -> forward round-trips bit-exactly.
struct Checkpoint {
    Backbone net;
    std::vector<double> scaler_mean, scaler_std;
    std::uint64_t train_seed = 0;
};
void save_checkpoint(const std::string& path, const Backbone& net,
                     const std::vector<double>& scaler_mean, const std::vector<double>& scaler_std,
                     std::uint64_t train_seed);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tta

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dect/forward_model.hpp"
#include "dect/phantom.hpp"
#include "dect/sir.hpp"

namespace dect {

// Channel-major planar activation stack.
struct FeatureMap {
    std::size_t channels = 0, n_y = 0, n_x = 0;
    std::vector<double> v;

    FeatureMap() = default;
    FeatureMap(std::size_t c, std::size_t ny, std::size_t nx)
        : channels(c), n_y(ny), n_x(nx), v(c * ny * nx, 0.0) {}

    std::size_t plane() const { return n_y * n_x; }
    double* channel(std::size_t c) { return v.data() + c * plane(); }
    const double* channel(std::size_t c) const { return v.data() + c * plane(); }
};

struct MixerConfig {
    std::size_t features = 16;
    std::size_t groups = 4;
    std::size_t kernel = 5;

    void validate() const;  // odd kernel, groups dividing features
};

struct ConvParams {
    std::size_t in_ch = 0, out_ch = 0, kernel = 0;
    std::vector<double> weight;  // [out][in][ky][kx]
    std::vector<double> bias;    // [out]
};

struct NormParams {
    std::vector<double> scale, shift;  // per channel
};

// Zero-padded "same" 2-D convolution, the building block of the mixer.
FeatureMap conv2d_same(const FeatureMap& x, const ConvParams& c);

// theta_k: all learnable state of one update block's spatial mixer,
// conv(4->F) -> group-norm -> relu -> conv(F->F) -> group-norm -> relu ->
// conv(F->2). Zero-padded "same" throughout.
struct MixerParams {
    MixerConfig config;
    ConvParams conv1, conv2, conv3;
    NormParams norm1, norm2;

    std::size_t parameter_count() const;
};

// He-normal conv weights, zero biases, unit norm scales. The final conv is
// zero-initialized so a fresh block is the identity map.
MixerParams init_mixer(const MixerConfig& cfg, std::uint64_t seed);

inline constexpr double kGroupNormEpsilon = 1e-5;

// Activations recorded by the forward pass; everything backward needs.
struct MixerTape {
    FeatureMap x0;              // input
    FeatureMap h1, h2;          // normalized pre-affine outputs of norm1/2
    FeatureMap z1, z2;          // post-affine pre-relu
    FeatureMap r1, r2;          // post-relu (conv2/conv3 inputs)
    std::vector<double> inv_std1, inv_std2;  // per group
};

FeatureMap mixer_forward(const FeatureMap& x, const MixerParams& p,
                         MixerTape* tape = nullptr);

// Gradient accumulator shaped like MixerParams.
struct MixerGrads {
    ConvParams conv1, conv2, conv3;
    NormParams norm1, norm2;
};

MixerGrads zero_grads(const MixerParams& p);

// Exact reverse-mode pass. Accumulates parameter gradients scaled by
// `scale` into g and returns the input gradient.
FeatureMap mixer_backward(const MixerTape& tape, const MixerParams& p,
                          const FeatureMap& dout, MixerGrads& g, double scale = 1.0);

struct UnrolledNet {
    MixerConfig mixer;
    SurrogateConfig surrogate;
    std::vector<MixerParams> blocks;

    std::size_t n_blocks() const { return blocks.size(); }
};

UnrolledNet init_net(std::size_t n_blocks, const MixerConfig& mixer,
                     const SurrogateConfig& surrogate, std::uint64_t seed);

// One unrolled update: c_k = mixer(stack[dc_1, dc_2, c_1, c_2]) + c_prev.
BasisImage block_apply(const BasisImage& c_prev, const SinogramPair& d, const ScanModel& m,
                       const MixerParams& blk, const SurrogateConfig& cfg,
                       const DcContext& ctx);

// Forward pass of one block that records everything its backward pass needs.
struct BlockTape {
    DcLayerState dc;
    MixerTape mixer;
    BasisImage input, output;
};

BasisImage block_apply_traced(const BasisImage& c_prev, const SinogramPair& d,
                              const ScanModel& m, const MixerParams& blk,
                              const SurrogateConfig& cfg, const DcContext& ctx,
                              BlockTape& tape);

// dL/dc_prev given dL/dc_k; parameter gradients accumulate into grads scaled
// by `scale`. Exact only when the DC curvature context is held fixed.
BasisImage block_backward(const BlockTape& tape, const BasisImage& dout,
                          const SinogramPair& d, const ScanModel& m,
                          const MixerParams& blk, MixerGrads& grads, double scale = 1.0);

struct InferResult {
    BasisImage output;
    std::vector<BasisImage> intermediates;  // c_1 .. c_N; back() == output
};

// Sequential composition of all blocks. The DC curvature context is built
// once at c_init when the config asks for the precomputed bound.
InferResult infer(const SinogramPair& d, const BasisImage& c_init, const UnrolledNet& net,
                  const ScanModel& m);

struct TrainSample {
    SinogramPair d;
    BasisImage c_init;
    BasisImage c_truth;
};

struct TrainConfig {
    std::size_t epochs = 40;
    double learning_rate = 2e-3;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    std::size_t pretrain_iters = 2000;
    // Intermediate supervision weights decay linearly, reaching zero at
    // supervision_fraction * epochs; the final block always has weight 1.
    double supervision_fraction = 0.5;
    double clip_norm = 10.0;

    void validate() const;
};

double supervision_weight(const TrainConfig& cfg, std::size_t epoch, std::size_t block,
                          std::size_t n_blocks);

struct TrainResult {
    std::vector<double> epoch_loss;               // weighted objective per epoch
    std::vector<std::vector<double>> block_loss;  // [epoch][block] mean L2 error
};

// Deep-supervised gradient descent on
//   mean_samples sum_n w_{e,n} ||c_n - c_truth||_2
// with global gradient-norm clipping. Deterministic for a fixed seed and
// thread count. Aborts (numeric error) after 5 consecutive epochs with loss
// above 10x the first epoch.
TrainResult train(const std::vector<TrainSample>& data, UnrolledNet& net,
                  const ScanModel& m, const TrainConfig& cfg);

// Trains a single block against c_truth with the DC output of each sample
// precomputed once (the block-0 input never changes). Returns the trained
// parameters for broadcast.
MixerParams pretrain_first_block(const std::vector<TrainSample>& data,
                                 const UnrolledNet& net, const ScanModel& m,
                                 const TrainConfig& cfg);

void broadcast_block(UnrolledNet& net, const MixerParams& theta);

// JSON manifest next to a flat float64 parameter file; hashes cover both the
// configuration and the parameter payload.
void save_net(const UnrolledNet& net, const std::string& json_path);
UnrolledNet load_net(const std::string& json_path);

}  // namespace dect

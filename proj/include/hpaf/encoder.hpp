#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hpaf/cps.hpp"
#include "hpaf/tensor.hpp"

namespace hpaf {

struct ModelConfig {
  int embed_dim = 128;        // D
  int gabor_channels = 16;    // LGC output channels
  int gabor_kernel_len = 31;  // odd support, centered at 0
  int msfb_width = 8;         // channels per multi-scale branch
  int msfb_out = 16;          // channels after the 1x1 fusion conv
  int stage_kernel = 5;       // conv kernel of the post-fusion stages
  int downsample_stages = 2;  // conv+pool stages after the multi-scale block
  double leaky_slope = 0.01;

  /// Small configuration used by the gradient checks and the synthetic
  /// end-to-end experiment.
  static ModelConfig tiny();
};

/// Multi-scale branch kernel sizes.
inline constexpr std::array<int, 5> kMsfbKernels = {7, 15, 17, 39, 41};

// ---------------------------------------------------------------------------
// Parameter bundles
// ---------------------------------------------------------------------------

/// Trainable Gabor filter bank. Scale is stored as log(sigma) so sigma stays
/// positive; the center frequency is clamped to (1e-3, 0.5) cycles/sample at
/// kernel generation.
struct GaborBank {
  nn::Tensor log_sigma;  // [C]
  nn::Tensor freq;       // [C]
  nn::Tensor phase;      // [C]
  int kernel_len = 31;
};

struct ConvLayer {
  nn::Tensor w;  // [Cout, Cin, K]
  nn::Tensor b;  // [Cout]
};

struct LinearLayer {
  nn::Tensor w;  // [out, in]
  nn::Tensor b;  // [out]
};

struct LayerNormParams {
  nn::Tensor gain, bias;  // [D]
};

struct ScorerMlp {
  LinearLayer l1, l2;  // D -> hidden -> 1
};

/// One branch of the dual-branch phase encoder. The variation branch opens
/// with the Gabor bank, the morphology branch with a plain conv layer; the
/// rest of the pipeline is identical.
struct BranchParams {
  bool use_gabor = false;
  GaborBank gabor;
  ConvLayer front;
  std::array<ConvLayer, 5> msfb;
  ConvLayer fuse;  // 1x1
  std::vector<ConvLayer> stages;
  LinearLayer head;  // msfb_out -> D
};

/// Scaled dot-product attention over a small node set plus score-based
/// pooling. Used at every fusion level with separate parameters.
struct FusionStage {
  nn::Tensor wq, wk, wv;  // [D, D]
  LinearLayer ffn1;       // D -> 2D
  LinearLayer ffn2;       // 2D -> D
  LayerNormParams ln_attn, ln_ffn, ln_pool;
  std::vector<ScorerMlp> scorers;  // one per node role
};

struct MvfeParams {
  BranchParams vfeb;  // learnable Gabor front
  BranchParams mfeb;  // plain conv front
  FusionStage fusion;
};

// ---------------------------------------------------------------------------
// Differentiable building blocks (exposed for tests)
// ---------------------------------------------------------------------------

/// All kernels of the bank as a [C, T] tensor: for each channel,
/// g(t) = exp(-t^2 / (2 sigma^2)) * cos(2 pi f t + psi) over centered integer
/// offsets, then mean-subtracted so every kernel sums to zero.
nn::Tensor gabor_kernels(const GaborBank& bank);

/// Single channel kernel, [T].
nn::Tensor gabor_kernel(const GaborBank& bank, int k);

struct MsfbTrace {
  std::vector<nn::Tensor> branches;  // per-kernel conv outputs, pre-fusion
  nn::Tensor fused;                  // after 1x1 conv + activation
  nn::Tensor pooled;                 // after stride-2 average pooling
};

MsfbTrace msfb_forward(const nn::Tensor& x, const BranchParams& p, double slope);

/// Full branch: front conv -> multi-scale block -> downsampling stages ->
/// global average pool -> linear head. Returns a [D] embedding.
nn::Tensor branch_forward(const std::vector<double>& segment, const BranchParams& p,
                          double slope);

struct PrGatOut {
  nn::Tensor attention;  // [N, N], rows sum to 1
  nn::Tensor refined;    // [N, D]
};

/// Attention refinement: A = softmax(LeakyReLU(Q K^T / sqrt(D))) followed by
/// residual+norm and a feed-forward residual+norm.
PrGatOut pr_gat(const FusionStage& s, const nn::Tensor& nodes, double slope);

struct PoolOut {
  nn::Tensor weights;  // [N], softmax of the per-role scores
  nn::Tensor pooled;   // [D], layer-normalized weighted sum
};

PoolOut attention_pool(const FusionStage& s, const nn::Tensor& refined, double slope);

/// pr_gat + attention_pool.
nn::Tensor fuse_nodes(const FusionStage& s, const std::vector<nn::Tensor>& nodes,
                      double slope);

// ---------------------------------------------------------------------------
// The full encoder
// ---------------------------------------------------------------------------

enum class Phase { P = 0, QRS = 1, ST = 2, TU = 3 };
inline constexpr std::array<const char*, 4> kPhaseNames = {"p", "qrs", "st", "tu"};

struct BeatTrace {
  std::array<nn::Tensor, 4> z_v, z_m;  // per-phase branch embeddings
  std::array<nn::Tensor, 4> h_phase;   // fused phase representations
  nn::Tensor slow, fast;               // group representations
  nn::Tensor u;                        // beat-level embedding [D]
};

class HpafModel {
 public:
  /// Seeded initialization: conv/linear weights uniform in +-sqrt(1/fan_in),
  /// sigma in [2, 8] samples, f in [0.01, 0.4], psi in [0, 2 pi).
  static HpafModel init(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Beat-level embedding u. Records on the active tape when one is set.
  nn::Tensor encode(const PhaseSegments& beat) const;
  BeatTrace encode_trace(const PhaseSegments& beat) const;

  /// Stable name -> tensor listing (checkpoint order).
  nn::NamedTensors named_params() const;
  std::vector<nn::Tensor> params() const;

  /// Loads values by name; shapes must match. Throws ParseError on unknown
  /// or missing names.
  void load_state(const nn::NamedTensors& state);

  void save(const std::string& path) const;
  static HpafModel load(const std::string& path, const ModelConfig& cfg);

  /// Largest |sum| over all generated Gabor kernels; the zero-mean
  /// constraint keeps this at roundoff level.
  double max_gabor_sum_abs() const;

  const MvfeParams& phase_params(Phase p) const { return phases_[size_t(p)]; }
  MvfeParams& phase_params(Phase p) { return phases_[size_t(p)]; }
  const FusionStage& slow_stage() const { return slow_; }
  const FusionStage& fast_stage() const { return fast_; }
  const FusionStage& global_stage() const { return global_; }

 private:
  ModelConfig cfg_;
  std::array<MvfeParams, 4> phases_;
  FusionStage slow_, fast_, global_;
};

}  // namespace hpaf

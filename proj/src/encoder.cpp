#include "hpaf/encoder.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "hpaf/errors.hpp"
#include "hpaf/rng.hpp"

namespace hpaf {

using nn::Pad;
using nn::Tensor;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Tensor uniform_param(nn::Shape shape, double lo, double hi, Rng& rng) {
  std::vector<double> data(nn::shape_size(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::param(std::move(shape), std::move(data));
}

// Zero bias init keeps the branch outputs free of a shared input-independent
// offset, which would otherwise dominate cosine geometry at initialization.
ConvLayer init_conv(int cout, int cin, int k, Rng& rng) {
  double bound = std::sqrt(1.0 / double(cin * k));
  ConvLayer c;
  c.w = uniform_param({cout, cin, k}, -bound, bound, rng);
  c.b = Tensor::param({cout}, std::vector<double>(size_t(cout), 0.0));
  return c;
}

LinearLayer init_linear(int out, int in, Rng& rng) {
  double bound = std::sqrt(1.0 / double(in));
  LinearLayer l;
  l.w = uniform_param({out, in}, -bound, bound, rng);
  l.b = Tensor::param({out}, std::vector<double>(size_t(out), 0.0));
  return l;
}

LayerNormParams init_ln(int d) {
  LayerNormParams ln;
  ln.gain = Tensor::param({d}, std::vector<double>(size_t(d), 1.0));
  ln.bias = Tensor::param({d}, std::vector<double>(size_t(d), 0.0));
  return ln;
}

GaborBank init_gabor(int channels, int kernel_len, Rng& rng) {
  GaborBank g;
  g.kernel_len = kernel_len;
  std::vector<double> ls(size_t(channels), 0.0), fr(size_t(channels), 0.0),
      ph(size_t(channels), 0.0);
  for (int i = 0; i < channels; ++i) {
    ls[size_t(i)] = std::log(rng.uniform(2.0, 8.0));
    fr[size_t(i)] = rng.uniform(0.01, 0.4);
    ph[size_t(i)] = rng.uniform(0.0, kTwoPi);
  }
  g.log_sigma = Tensor::param({channels}, std::move(ls));
  g.freq = Tensor::param({channels}, std::move(fr));
  g.phase = Tensor::param({channels}, std::move(ph));
  return g;
}

BranchParams init_branch(bool use_gabor, const ModelConfig& cfg, Rng& rng) {
  BranchParams bp;
  bp.use_gabor = use_gabor;
  if (use_gabor) {
    bp.gabor = init_gabor(cfg.gabor_channels, cfg.gabor_kernel_len, rng);
  } else {
    bp.front = init_conv(cfg.gabor_channels, 1, cfg.gabor_kernel_len, rng);
  }
  for (size_t i = 0; i < kMsfbKernels.size(); ++i)
    bp.msfb[i] = init_conv(cfg.msfb_width, cfg.gabor_channels, kMsfbKernels[i], rng);
  bp.fuse = init_conv(cfg.msfb_out, cfg.msfb_width * int(kMsfbKernels.size()), 1, rng);
  for (int s = 0; s < cfg.downsample_stages; ++s)
    bp.stages.push_back(init_conv(cfg.msfb_out, cfg.msfb_out, cfg.stage_kernel, rng));
  bp.head = init_linear(cfg.embed_dim, cfg.msfb_out, rng);
  return bp;
}

int scorer_hidden(int d) { return std::max(2, d / 4); }

FusionStage init_fusion(int d, int n_nodes, Rng& rng) {
  FusionStage f;
  double bound = std::sqrt(1.0 / double(d));
  f.wq = uniform_param({d, d}, -bound, bound, rng);
  f.wk = uniform_param({d, d}, -bound, bound, rng);
  f.wv = uniform_param({d, d}, -bound, bound, rng);
  f.ffn1 = init_linear(2 * d, d, rng);
  f.ffn2 = init_linear(d, 2 * d, rng);
  f.ln_attn = init_ln(d);
  f.ln_ffn = init_ln(d);
  f.ln_pool = init_ln(d);
  int h = scorer_hidden(d);
  for (int k = 0; k < n_nodes; ++k) {
    ScorerMlp s;
    s.l1 = init_linear(h, d, rng);
    s.l2 = init_linear(1, h, rng);
    f.scorers.push_back(std::move(s));
  }
  return f;
}

Tensor conv_bias(const Tensor& x, const ConvLayer& layer, Pad pad, int stride = 1) {
  Tensor y = nn::conv1d(x, layer.w, stride, pad);
  return nn::add(y, nn::reshape(layer.b, {layer.b.dim(0), 1}));
}

}  // namespace

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.embed_dim = 8;
  c.gabor_channels = 2;
  c.msfb_width = 4;
  c.msfb_out = 16;
  return c;
}

Tensor gabor_kernels(const GaborBank& bank) {
  int t_len = bank.kernel_len;
  int c = bank.log_sigma.dim(0);
  int half = (t_len - 1) / 2;
  std::vector<double> ts(size_t(t_len), 0.0), t2(size_t(t_len), 0.0);
  for (int i = 0; i < t_len; ++i) {
    ts[size_t(i)] = double(i - half);
    t2[size_t(i)] = ts[size_t(i)] * ts[size_t(i)];
  }
  Tensor t = Tensor::from({t_len}, std::move(ts));
  Tensor tsq = Tensor::from({t_len}, std::move(t2));

  // envelope: exp(-t^2 * e^{-2 log sigma} / 2), one row per channel
  Tensor neg_half_inv_var =
      nn::scalar_mul(nn::exp(nn::scalar_mul(bank.log_sigma, -2.0)), -0.5);  // [C]
  Tensor env = nn::exp(nn::mul(nn::reshape(neg_half_inv_var, {c, 1}), tsq));  // [C,T]

  // carrier: cos(2 pi f t + psi), f clamped to (1e-3, 0.5)
  Tensor f = nn::clamp(bank.freq, 1e-3, 0.5 - 1e-9);
  Tensor angle = nn::add(nn::mul(nn::reshape(nn::scalar_mul(f, kTwoPi), {c, 1}), t),
                         nn::reshape(bank.phase, {c, 1}));  // [C,T]
  Tensor g = nn::mul(env, nn::cos(angle));

  // zero-mean constraint per channel
  Tensor channel_mean = nn::mean(g, 1);  // [C]
  return nn::sub(g, nn::reshape(channel_mean, {c, 1}));
}

Tensor gabor_kernel(const GaborBank& bank, int k) {
  return nn::select_row(gabor_kernels(bank), k);
}

MsfbTrace msfb_forward(const Tensor& x, const BranchParams& p, double slope) {
  MsfbTrace tr;
  tr.branches.reserve(kMsfbKernels.size());
  for (size_t i = 0; i < kMsfbKernels.size(); ++i)
    tr.branches.push_back(conv_bias(x, p.msfb[i], Pad::same));
  Tensor cat = nn::concat(tr.branches, 0);
  tr.fused = nn::leaky_relu(conv_bias(cat, p.fuse, Pad::same), slope);
  tr.pooled = nn::avg_pool1d(tr.fused, 2, 2);
  return tr;
}

Tensor branch_forward(const std::vector<double>& segment, const BranchParams& p,
                      double slope) {
  Tensor x = Tensor::from({1, int(segment.size())},
                          std::vector<double>(segment.begin(), segment.end()));
  Tensor front;
  if (p.use_gabor) {
    Tensor kers = gabor_kernels(p.gabor);
    front = nn::conv1d(x, nn::reshape(kers, {kers.dim(0), 1, kers.dim(1)}), 1, Pad::same);
  } else {
    front = conv_bias(x, p.front, Pad::same);
  }
  Tensor h = nn::leaky_relu(front, slope);
  h = msfb_forward(h, p, slope).pooled;
  // Strided downsampling: stride-2 convs with max pooling shrink the map to a
  // couple of samples per channel, so the average pool keeps positional
  // structure instead of washing it out.
  for (const ConvLayer& stage : p.stages) {
    h = nn::leaky_relu(conv_bias(h, stage, Pad::same, 2), slope);
    if (h.dim(1) >= 2) h = nn::max_pool1d(h, 2, 2);
  }
  Tensor gap = nn::mean(h, 1);
  return nn::linear(gap, p.head.w, p.head.b);
}

PrGatOut pr_gat(const FusionStage& s, const Tensor& nodes, double slope) {
  int d = nodes.dim(1);
  Tensor q = nn::matmul(nodes, s.wq);
  Tensor k = nn::matmul(nodes, s.wk);
  Tensor v = nn::matmul(nodes, s.wv);
  Tensor scores = nn::scalar_mul(nn::matmul(q, nn::transpose(k)), 1.0 / std::sqrt(double(d)));
  PrGatOut out;
  out.attention = nn::softmax(nn::leaky_relu(scores, slope), 1);
  Tensor h1 = nn::layer_norm(nn::add(nodes, nn::matmul(out.attention, v)),
                             s.ln_attn.gain, s.ln_attn.bias);
  Tensor ff = nn::linear(nn::leaky_relu(nn::linear(h1, s.ffn1.w, s.ffn1.b), slope),
                         s.ffn2.w, s.ffn2.b);
  out.refined = nn::layer_norm(nn::add(h1, ff), s.ln_ffn.gain, s.ln_ffn.bias);
  return out;
}

PoolOut attention_pool(const FusionStage& s, const Tensor& refined, double slope) {
  int n = refined.dim(0);
  if (int(s.scorers.size()) != n)
    throw ShapeError("attention_pool: " + std::to_string(n) + " nodes but " +
                     std::to_string(s.scorers.size()) + " scorers");
  std::vector<Tensor> scores;
  scores.reserve(size_t(n));
  for (int k = 0; k < n; ++k) {
    Tensor h = nn::select_row(refined, k);
    Tensor hidden = nn::leaky_relu(nn::linear(h, s.scorers[size_t(k)].l1.w,
                                              s.scorers[size_t(k)].l1.b),
                                   slope);
    scores.push_back(nn::linear(hidden, s.scorers[size_t(k)].l2.w, s.scorers[size_t(k)].l2.b));
  }
  PoolOut out;
  out.weights = nn::softmax(nn::concat(scores, 0), 0);
  Tensor acc;
  for (int k = 0; k < n; ++k) {
    Tensor term = nn::mul(nn::select_row(refined, k), nn::select(out.weights, k));
    acc = k == 0 ? term : nn::add(acc, term);
  }
  out.pooled = nn::layer_norm(acc, s.ln_pool.gain, s.ln_pool.bias);
  return out;
}

Tensor fuse_nodes(const FusionStage& s, const std::vector<Tensor>& nodes, double slope) {
  Tensor h = nn::stack_rows(nodes);
  return attention_pool(s, pr_gat(s, h, slope).refined, slope).pooled;
}

HpafModel HpafModel::init(const ModelConfig& cfg, uint64_t seed) {
  HpafModel m;
  m.cfg_ = cfg;
  Rng rng(derive_seed(seed, "model"));
  for (size_t ph = 0; ph < 4; ++ph) {
    m.phases_[ph].vfeb = init_branch(true, cfg, rng);
    m.phases_[ph].mfeb = init_branch(false, cfg, rng);
    m.phases_[ph].fusion = init_fusion(cfg.embed_dim, 2, rng);
  }
  m.slow_ = init_fusion(cfg.embed_dim, 2, rng);
  m.fast_ = init_fusion(cfg.embed_dim, 2, rng);
  m.global_ = init_fusion(cfg.embed_dim, 2, rng);
  return m;
}

BeatTrace HpafModel::encode_trace(const PhaseSegments& beat) const {
  BeatTrace tr;
  const std::array<const std::vector<double>*, 4> segs = {&beat.p, &beat.qrs, &beat.st,
                                                          &beat.tu};
  for (size_t ph = 0; ph < 4; ++ph) {
    tr.z_v[ph] = branch_forward(*segs[ph], phases_[ph].vfeb, cfg_.leaky_slope);
    tr.z_m[ph] = branch_forward(*segs[ph], phases_[ph].mfeb, cfg_.leaky_slope);
    tr.h_phase[ph] =
        fuse_nodes(phases_[ph].fusion, {tr.z_v[ph], tr.z_m[ph]}, cfg_.leaky_slope);
  }
  // slow-wave group: P with T/U; fast-wave group: QRS with ST
  tr.slow = fuse_nodes(slow_, {tr.h_phase[0], tr.h_phase[3]}, cfg_.leaky_slope);
  tr.fast = fuse_nodes(fast_, {tr.h_phase[1], tr.h_phase[2]}, cfg_.leaky_slope);
  tr.u = fuse_nodes(global_, {tr.slow, tr.fast}, cfg_.leaky_slope);
  return tr;
}

Tensor HpafModel::encode(const PhaseSegments& beat) const {
  return encode_trace(beat).u;
}

namespace {

void collect_branch(const std::string& prefix, const BranchParams& bp,
                    nn::NamedTensors& out) {
  if (bp.use_gabor) {
    out.emplace_back(prefix + ".gabor.log_sigma", bp.gabor.log_sigma);
    out.emplace_back(prefix + ".gabor.freq", bp.gabor.freq);
    out.emplace_back(prefix + ".gabor.phase", bp.gabor.phase);
  } else {
    out.emplace_back(prefix + ".front.w", bp.front.w);
    out.emplace_back(prefix + ".front.b", bp.front.b);
  }
  for (size_t i = 0; i < bp.msfb.size(); ++i) {
    out.emplace_back(prefix + ".msfb" + std::to_string(i) + ".w", bp.msfb[i].w);
    out.emplace_back(prefix + ".msfb" + std::to_string(i) + ".b", bp.msfb[i].b);
  }
  out.emplace_back(prefix + ".fuse.w", bp.fuse.w);
  out.emplace_back(prefix + ".fuse.b", bp.fuse.b);
  for (size_t i = 0; i < bp.stages.size(); ++i) {
    out.emplace_back(prefix + ".stage" + std::to_string(i) + ".w", bp.stages[i].w);
    out.emplace_back(prefix + ".stage" + std::to_string(i) + ".b", bp.stages[i].b);
  }
  out.emplace_back(prefix + ".head.w", bp.head.w);
  out.emplace_back(prefix + ".head.b", bp.head.b);
}

void collect_fusion(const std::string& prefix, const FusionStage& f,
                    nn::NamedTensors& out) {
  out.emplace_back(prefix + ".wq", f.wq);
  out.emplace_back(prefix + ".wk", f.wk);
  out.emplace_back(prefix + ".wv", f.wv);
  out.emplace_back(prefix + ".ffn1.w", f.ffn1.w);
  out.emplace_back(prefix + ".ffn1.b", f.ffn1.b);
  out.emplace_back(prefix + ".ffn2.w", f.ffn2.w);
  out.emplace_back(prefix + ".ffn2.b", f.ffn2.b);
  out.emplace_back(prefix + ".ln_attn.gain", f.ln_attn.gain);
  out.emplace_back(prefix + ".ln_attn.bias", f.ln_attn.bias);
  out.emplace_back(prefix + ".ln_ffn.gain", f.ln_ffn.gain);
  out.emplace_back(prefix + ".ln_ffn.bias", f.ln_ffn.bias);
  out.emplace_back(prefix + ".ln_pool.gain", f.ln_pool.gain);
  out.emplace_back(prefix + ".ln_pool.bias", f.ln_pool.bias);
  for (size_t k = 0; k < f.scorers.size(); ++k) {
    std::string sp = prefix + ".scorer" + std::to_string(k);
    out.emplace_back(sp + ".l1.w", f.scorers[k].l1.w);
    out.emplace_back(sp + ".l1.b", f.scorers[k].l1.b);
    out.emplace_back(sp + ".l2.w", f.scorers[k].l2.w);
    out.emplace_back(sp + ".l2.b", f.scorers[k].l2.b);
  }
}

}  // namespace

nn::NamedTensors HpafModel::named_params() const {
  nn::NamedTensors out;
  for (size_t ph = 0; ph < 4; ++ph) {
    std::string p = kPhaseNames[ph];
    collect_branch(p + ".vfeb", phases_[ph].vfeb, out);
    collect_branch(p + ".mfeb", phases_[ph].mfeb, out);
    collect_fusion(p + ".fusion", phases_[ph].fusion, out);
  }
  collect_fusion("slow", slow_, out);
  collect_fusion("fast", fast_, out);
  collect_fusion("global", global_, out);
  return out;
}

std::vector<Tensor> HpafModel::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

void HpafModel::load_state(const nn::NamedTensors& state) {
  std::map<std::string, Tensor> lookup;
  for (const auto& [name, t] : state) lookup.emplace(name, t);
  for (auto& [name, t] : named_params()) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw ParseError("checkpoint missing parameter: " + name);
    if (it->second.shape() != t.shape())
      throw ParseError("checkpoint shape mismatch for " + name + ": expected " +
                       nn::shape_str(t.shape()) + ", got " +
                       nn::shape_str(it->second.shape()));
    auto src = it->second.values();
    std::copy(src.begin(), src.end(), t.values_mut().begin());
  }
}

void HpafModel::save(const std::string& path) const {
  nn::save_checkpoint(path, named_params());
}

HpafModel HpafModel::load(const std::string& path, const ModelConfig& cfg) {
  HpafModel m = init(cfg, 0);
  m.load_state(nn::load_checkpoint(path));
  return m;
}

double HpafModel::max_gabor_sum_abs() const {
  double worst = 0.0;
  for (const MvfeParams& mv : phases_) {
    Tensor kers = gabor_kernels(mv.vfeb.gabor);
    int c = kers.dim(0), t = kers.dim(1);
    auto v = kers.values();
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int i = 0; i < t; ++i) s += v[size_t(ch * t + i)];
      worst = std::max(worst, std::abs(s));
    }
  }
  return worst;
}

}  // namespace hpaf

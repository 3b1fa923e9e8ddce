#pragma once

#include <string>
#include <vector>

#include "actdiff/gradcheck.hpp"
#include "actdiff/rng.hpp"
#include "actdiff/tape.hpp"

// Masked encoder and denoising decoder: stacks of dilated conv, windowed
// attention with relative position bias, instance norm, and feed-forward
// blocks with residual connections. Layer i (1-based) uses dilation and
// window 2^i, capped by the sequence length and the bias-table reach.

namespace actdiff {

struct ModelConfig {
  std::size_t n_enc_layers = 4;
  std::size_t n_dec_layers = 3;
  std::size_t enc_dim = 16;
  std::size_t dec_dim = 8;
  std::size_t num_classes = 6;
  std::size_t feature_dim = 16;
  std::size_t w_max = 100;  // relative-bias clip distance
  std::vector<std::size_t> cond_layer_ids = {2, 3, 4};  // 1-based encoder layers
  double signal_scale = 1.0;
  double norm_eps = 1e-5;
  std::size_t conv_kernel = 3;

  void validate() const {
    if (n_enc_layers == 0 || n_dec_layers == 0 || enc_dim == 0 || dec_dim == 0 ||
        num_classes == 0 || feature_dim == 0 || w_max == 0)
      throw std::invalid_argument("model config: dimensions must be >= 1");
    if (conv_kernel % 2 == 0) throw std::invalid_argument("model config: conv kernel must be odd");
    if (cond_layer_ids.empty()) throw std::invalid_argument("model config: empty cond_layer_ids");
    for (std::size_t id : cond_layer_ids)
      if (id < 1 || id > n_enc_layers)
        throw std::invalid_argument("model config: cond layer id out of range");
  }

  std::size_t layer_span(std::size_t layer_1based, std::size_t seq_len) const {
    const std::size_t pow2 = std::size_t(1) << std::min<std::size_t>(layer_1based, 30);
    return std::max<std::size_t>(1, std::min({pow2, seq_len, 2 * w_max}));
  }
};

template <typename T>
struct EncoderOutput {
  std::vector<Tensor<T>> layer_embeddings;  // one T x enc_dim per layer
  Tensor<T> embedding;                      // last layer output
  Tensor<T> probs;                          // softmax(E W_enc + b), T x K
};

template <typename T>
struct DecoderOutput {
  Tensor<T> embedding;  // T x dec_dim
  Tensor<T> logits;     // T x K
  Tensor<T> probs;      // softmax rows
};

namespace detail {

template <typename T>
Tensor<T> uniform_fan_in(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : t.data) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return t;
}

template <typename T>
void init_block(ParamMap<T>& p, Rng& rng, const std::string& prefix, std::size_t dim,
                std::size_t qk_in, std::size_t kernel, std::size_t w_max) {
  p.emplace(prefix + ".conv.w", uniform_fan_in<T>(rng, {kernel, dim, dim}, kernel * dim));
  p.emplace(prefix + ".conv.b", Tensor<T>::zeros({dim}));
  p.emplace(prefix + ".attn.wq", uniform_fan_in<T>(rng, {qk_in, dim}, qk_in));
  p.emplace(prefix + ".attn.wk", uniform_fan_in<T>(rng, {qk_in, dim}, qk_in));
  p.emplace(prefix + ".attn.wv", uniform_fan_in<T>(rng, {dim, dim}, dim));
  p.emplace(prefix + ".attn.bias", Tensor<T>::zeros({2 * w_max + 1}));
  p.emplace(prefix + ".ffn.w1", uniform_fan_in<T>(rng, {dim, dim}, dim));
  p.emplace(prefix + ".ffn.b1", Tensor<T>::zeros({dim}));
  p.emplace(prefix + ".ffn.w2", uniform_fan_in<T>(rng, {dim, dim}, dim));
  p.emplace(prefix + ".ffn.b2", Tensor<T>::zeros({dim}));
}

// Shared residual block: dilated conv -> instance norm -> windowed attention
// (queries/keys from `qk_src`, values from the conv stream) -> feed-forward,
// wrapped with a residual onto the block input.
template <typename T>
Tensor<T> residual_block(Tape<T>* tp, const Tensor<T>& x, const ParamMap<T>& p,
                         const std::string& prefix, std::size_t span, double eps,
                         const Tensor<T>* cond) {
  Tensor<T> c = op::relu(tp, op::conv1d_dilated(tp, x, p.at(prefix + ".conv.w"),
                                                &p.at(prefix + ".conv.b"), span));
  Tensor<T> n = op::instance_norm(tp, c, static_cast<T>(eps));
  Tensor<T> qk_src = cond ? op::concat_cols(tp, n, *cond) : n;
  Tensor<T> q = op::linear(tp, qk_src, p.at(prefix + ".attn.wq"));
  Tensor<T> k = op::linear(tp, qk_src, p.at(prefix + ".attn.wk"));
  Tensor<T> v = op::linear(tp, n, p.at(prefix + ".attn.wv"));
  Tensor<T> a = op::windowed_attention(tp, q, k, v, span, &p.at(prefix + ".attn.bias"));
  Tensor<T> h = op::add(tp, c, a);
  Tensor<T> f = op::linear(tp, op::relu(tp, op::linear(tp, h, p.at(prefix + ".ffn.w1"),
                                                       &p.at(prefix + ".ffn.b1"))),
                           p.at(prefix + ".ffn.w2"), &p.at(prefix + ".ffn.b2"));
  return op::add(tp, x, f);
}

}  // namespace detail

template <typename T>
ParamMap<T> init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamMap<T> p;
  {
    Tensor<T> token = Tensor<T>::zeros({cfg.feature_dim});
    for (T& v : token.data) v = static_cast<T>(rng.normal() * 0.02);
    p.emplace("mask_token", std::move(token));
  }
  p.emplace("enc.in.w", detail::uniform_fan_in<T>(rng, {cfg.feature_dim, cfg.enc_dim}, cfg.feature_dim));
  p.emplace("enc.in.b", Tensor<T>::zeros({cfg.enc_dim}));
  for (std::size_t i = 1; i <= cfg.n_enc_layers; ++i)
    detail::init_block(p, rng, "enc.l" + std::to_string(i), cfg.enc_dim, cfg.enc_dim,
                       cfg.conv_kernel, cfg.w_max);
  p.emplace("enc.head.w", detail::uniform_fan_in<T>(rng, {cfg.enc_dim, cfg.num_classes}, cfg.enc_dim));
  p.emplace("enc.head.b", Tensor<T>::zeros({cfg.num_classes}));

  const std::size_t cond_in = cfg.cond_layer_ids.size() * cfg.enc_dim;
  p.emplace("cond.w", detail::uniform_fan_in<T>(rng, {cond_in, cfg.dec_dim}, cond_in));
  p.emplace("cond.b", Tensor<T>::zeros({cfg.dec_dim}));

  p.emplace("dec.in.w", detail::uniform_fan_in<T>(rng, {cfg.num_classes, cfg.dec_dim}, cfg.num_classes));
  p.emplace("dec.in.b", Tensor<T>::zeros({cfg.dec_dim}));
  p.emplace("time.w1", detail::uniform_fan_in<T>(rng, {cfg.dec_dim, cfg.dec_dim}, cfg.dec_dim));
  p.emplace("time.b1", Tensor<T>::zeros({cfg.dec_dim}));
  p.emplace("time.w2", detail::uniform_fan_in<T>(rng, {cfg.dec_dim, cfg.dec_dim}, cfg.dec_dim));
  p.emplace("time.b2", Tensor<T>::zeros({cfg.dec_dim}));
  for (std::size_t i = 1; i <= cfg.n_dec_layers; ++i)
    detail::init_block(p, rng, "dec.l" + std::to_string(i), cfg.dec_dim, 2 * cfg.dec_dim,
                       cfg.conv_kernel, cfg.w_max);
  p.emplace("dec.head.w", detail::uniform_fan_in<T>(rng, {cfg.dec_dim, cfg.num_classes}, cfg.dec_dim));
  p.emplace("dec.head.b", Tensor<T>::zeros({cfg.num_classes}));
  return p;
}

template <typename T>
std::size_t param_count(const ParamMap<T>& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : p) n += t.numel();
  return n;
}

template <typename T>
EncoderOutput<T> encoder_forward(Tape<T>* tp, const Tensor<T>& f_masked, const ParamMap<T>& p,
                                 const ModelConfig& cfg) {
  if (f_masked.ndim() != 2 || f_masked.cols() != cfg.feature_dim)
    throw std::invalid_argument("encoder: feature shape mismatch " + shape_str(f_masked.shape));
  const std::size_t tlen = f_masked.rows();
  EncoderOutput<T> out;
  Tensor<T> x = op::linear(tp, f_masked, p.at("enc.in.w"), &p.at("enc.in.b"));
  for (std::size_t i = 1; i <= cfg.n_enc_layers; ++i) {
    x = detail::residual_block(tp, x, p, "enc.l" + std::to_string(i),
                               cfg.layer_span(i, tlen), cfg.norm_eps,
                               static_cast<const Tensor<T>*>(nullptr));
    out.layer_embeddings.push_back(x);
  }
  out.embedding = x;
  out.probs = op::softmax_rows(tp, op::linear(tp, x, p.at("enc.head.w"), &p.at("enc.head.b")));
  return out;
}

// Channel-wise concatenation of the selected encoder layers, projected to the
// decoder width.
template <typename T>
Tensor<T> condition_select(Tape<T>* tp, const EncoderOutput<T>& enc, const ParamMap<T>& p,
                           const ModelConfig& cfg) {
  if (cfg.cond_layer_ids.empty()) throw std::invalid_argument("condition_select: empty ids");
  Tensor<T> acc;
  bool first = true;
  for (std::size_t id : cfg.cond_layer_ids) {
    const Tensor<T>& e = enc.layer_embeddings.at(id - 1);
    acc = first ? e : op::concat_cols(tp, acc, e);
    first = false;
  }
  return op::linear(tp, acc, p.at("cond.w"), &p.at("cond.b"));
}

// Sinusoidal embedding of the diffusion step.
template <typename T>
Tensor<T> timestep_embedding(int s, std::size_t dim) {
  if (s < 0) throw std::invalid_argument("timestep_embedding: s must be >= 0");
  Tensor<T> out = Tensor<T>::zeros({1, dim});
  const std::size_t half = dim / 2;
  const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / denom);
    const double ang = static_cast<double>(s) * freq;
    out.data[i] = static_cast<T>(std::sin(ang));
    out.data[half + i] = static_cast<T>(std::cos(ang));
  }
  return out;
}

template <typename T>
DecoderOutput<T> decoder_forward(Tape<T>* tp, const Tensor<T>& a_s, int s, const Tensor<T>& e_cond,
                                 const ParamMap<T>& p, const ModelConfig& cfg) {
  if (a_s.ndim() != 2 || a_s.cols() != cfg.num_classes)
    throw std::invalid_argument("decoder: label shape mismatch " + shape_str(a_s.shape));
  if (e_cond.rows() != a_s.rows() || e_cond.cols() != cfg.dec_dim)
    throw std::invalid_argument("decoder: conditioning shape mismatch");
  if (s < 0) throw std::invalid_argument("decoder: step out of range");
  const std::size_t tlen = a_s.rows();

  Tensor<T> temb = timestep_embedding<T>(s, cfg.dec_dim);
  Tensor<T> tproj = op::linear(tp, op::relu(tp, op::linear(tp, temb, p.at("time.w1"), &p.at("time.b1"))),
                               p.at("time.w2"), &p.at("time.b2"));
  Tensor<T> x = op::add_rowvec(tp, op::linear(tp, a_s, p.at("dec.in.w"), &p.at("dec.in.b")), tproj);
  for (std::size_t i = 1; i <= cfg.n_dec_layers; ++i)
    x = detail::residual_block(tp, x, p, "dec.l" + std::to_string(i),
                               cfg.layer_span(i, tlen), cfg.norm_eps, &e_cond);
  DecoderOutput<T> out;
  out.embedding = x;
  out.logits = op::linear(tp, x, p.at("dec.head.w"), &p.at("dec.head.b"));
  out.probs = op::softmax_rows(tp, out.logits);
  return out;
}

}  // namespace actdiff

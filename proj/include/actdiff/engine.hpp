#pragma once

#include <chrono>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "actdiff/data.hpp"
#include "actdiff/diffusion.hpp"
#include "actdiff/ioutil.hpp"
#include "actdiff/losses.hpp"
#include "actdiff/masking.hpp"
#include "actdiff/metrics.hpp"
#include "actdiff/model.hpp"

// Training loop (random mask choice, random time step, closed-form noising,
// dual encoder/decoder losses), Adam with decoupled weight decay,
// checkpointing, and the two inference entry points.

namespace actdiff {

struct TrainConfig {
  int epochs = 160;
  int batch_size = 4;
  double lr = 2e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  int diffusion_steps = 100;  // S
  int inference_steps = 10;
  double beta_start = 1e-4;
  // chosen so alpha_bar(S) is ~2e-5 at S=100; the 0.02 convention assumes
  // S=1000 and would leave the endpoint far from pure noise
  double beta_end = 0.2;
  LossWeights weights;
  std::vector<double> alpha_set = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  RandomMaskSpec random_mask{10, 5};
  double boundary_sigma = 1.0;
  double smooth_tau = 4.0;
  int sample_rate = 1;
  ModelConfig model;
  // ablation toggles
  bool drop_enc_loss = false;
  bool drop_dec_obs_loss = false;  // decoder losses only on masked frames
  std::vector<std::string> disabled_masks;

  void validate() const {
    if (epochs < 0 || batch_size < 1 || diffusion_steps < 1 || inference_steps < 2 ||
        sample_rate < 1)
      throw std::invalid_argument("train config: invalid counts");
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    for (double w : {weights.enc_ce, weights.enc_smo, weights.enc_bd, weights.dec_ce,
                     weights.dec_smo, weights.dec_bd})
      if (w < 0.0) throw std::invalid_argument("train config: loss weights must be non-negative");
    model.validate();
  }
};

// Named per-dataset hyperparameter profiles; "desk" is the small default.
TrainConfig config_profile(const std::string& name);
void config_apply_json(TrainConfig& cfg, const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig load_config_file(const std::string& path);

struct EpochLoss {
  double enc_ce = 0, enc_smo = 0, enc_bd = 0, dec_ce = 0, dec_smo = 0, dec_bd = 0, total = 0;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string precision;
  std::vector<EpochLoss> epoch_losses;
  MetricsReport tas;
  MetricsReport lta;
  double wall_clock_sec = 0;

  // wall clock is the one nondeterministic field; drop it when comparing runs
  nlohmann::json to_json(bool include_wall_clock = true) const;
};

template <typename T>
constexpr const char* precision_name() {
  if constexpr (sizeof(T) == 4)
    return "f32";
  else
    return "f64";
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt, std::uint64_t stream) {
  Rng r(base ^ (salt * 0x9e3779b97f4a7c15ull) ^ (stream + 1));
  return r.next_u64();
}

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  ParamMap<T> m, v;
};

// Bias-corrected Adam with decoupled weight decay.
template <typename T>
void adam_update(ParamMap<T>& params, const ParamMap<T>& grads, AdamState<T>& st, double lr,
                 double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (st.m.empty()) {
    for (const auto& [name, t] : params) {
      st.m.emplace(name, Tensor<T>::zeros(t.shape));
      st.v.emplace(name, Tensor<T>::zeros(t.shape));
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    auto& m = st.m.at(name);
    auto& v = st.v.at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      const double mi = beta1 * static_cast<double>(m.data[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(v.data[i]) + (1.0 - beta2) * gi * gi;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      double x = static_cast<double>(p.data[i]);
      x -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
      if (weight_decay != 0.0) x -= lr * weight_decay * x;
      p.data[i] = static_cast<T>(x);
    }
  }
}

template <typename T>
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    sched_ = make_schedule(cfg_.diffusion_steps, cfg_.beta_start, cfg_.beta_end);
    rng_ = Rng(cfg_.seed);
    Rng init_rng(derive_seed(cfg_.seed, 0xA11, 0));
    params_ = init_params<T>(cfg_.model, init_rng);
    enabled_masks_ = enabled_masks();
  }

  const TrainConfig& config() const { return cfg_; }
  const ParamMap<T>& params() const { return params_; }
  ParamMap<T>& params_mut() { return params_; }
  const Schedule& schedule() const { return sched_; }
  int epoch() const { return epoch_; }
  Rng& rng() { return rng_; }

  std::vector<MaskType> enabled_masks() const {
    std::vector<MaskType> all = {MaskType::none, MaskType::anticipative, MaskType::random,
                                 MaskType::relation, MaskType::boundary};
    std::vector<MaskType> out;
    for (MaskType t : all) {
      bool drop = false;
      for (const auto& name : cfg_.disabled_masks)
        if (mask_type_from_name(name) == t) drop = true;
      if (!drop) out.push_back(t);
    }
    if (out.empty()) throw std::invalid_argument("trainer: every mask type disabled");
    return out;
  }

  // One gradient-accumulated optimizer step over a batch of videos.
  LossBreakdown<T> train_step(const std::vector<const VideoRecord*>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    ParamMap<T> grad_acc;
    for (const auto& [name, t] : params_) grad_acc.emplace(name, Tensor<T>::zeros(t.shape));
    LossBreakdown<T> mean_bd;
    for (const VideoRecord* video : batch) {
      LossBreakdown<T> bd = backprop_video(*video, grad_acc);
      mean_bd += bd;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    mean_bd /= static_cast<double>(batch.size());
    for (auto& [name, g] : grad_acc)
      for (T& v : g.data) v = static_cast<T>(static_cast<double>(v) * inv);
    adam_update(params_, grad_acc, adam_, cfg_.lr, cfg_.weight_decay);
    return mean_bd;
  }

  // Epoch loop over the train split (seeded shuffled order, sample-rate
  // applied). Appends one EpochLoss per epoch to the report.
  void fit(const Dataset& ds, RunReport* report = nullptr,
           const std::function<void(int)>& on_epoch = {}) {
    validate_data(ds);
    std::vector<VideoRecord> train;
    for (std::size_t i : ds.train_indices)
      train.push_back(subsample(ds.videos[i], static_cast<std::size_t>(cfg_.sample_rate)));
    if (train.empty()) throw std::invalid_argument("fit: empty train split");
    while (epoch_ < cfg_.epochs) {
      std::vector<std::size_t> order(train.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng_.uniform_int(i))]);
      LossBreakdown<T> epoch_bd;
      std::size_t n_batches = 0;
      for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(cfg_.batch_size)) {
        std::vector<const VideoRecord*> batch;
        for (std::size_t b = off; b < std::min(order.size(), off + static_cast<std::size_t>(cfg_.batch_size)); ++b)
          batch.push_back(&train[order[b]]);
        epoch_bd += train_step(batch);
        ++n_batches;
      }
      epoch_bd /= static_cast<double>(n_batches);
      ++epoch_;
      if (report)
        report->epoch_losses.push_back({epoch_bd.enc_ce, epoch_bd.enc_smo, epoch_bd.enc_bd,
                                        epoch_bd.dec_ce, epoch_bd.dec_smo, epoch_bd.dec_bd,
                                        epoch_bd.total});
      if (on_epoch) on_epoch(epoch_);
    }
  }

  // TAS inference: encode unmasked features once, then DDIM-denoise from
  // Gaussian noise and take the frame-wise argmax.
  std::vector<int> infer_tas(const float* features, std::size_t n_frames,
                             std::uint64_t stream = 0) const {
    Tensor<T> f = to_tensor(features, n_frames);
    auto enc = encoder_forward<T>(nullptr, f, params_, cfg_.model);
    auto econd = condition_select<T>(nullptr, enc, params_, cfg_.model);
    return denoise_argmax(econd, n_frames, derive_seed(cfg_.seed, 0x7A5, stream));
  }

  // LTA inference from the observed prefix only: mask tokens fill the
  // n_future positions. Returns n_obs + n_future labels.
  std::vector<int> infer_lta(const float* obs_features, std::size_t n_obs, std::size_t n_future,
                             std::uint64_t stream = 0) const {
    Tensor<T> f_obs = to_tensor(obs_features, n_obs);
    auto [f_full, mask] = build_anticipation_input(f_obs, n_future, params_.at("mask_token"));
    auto enc = encoder_forward<T>(nullptr, f_full, params_, cfg_.model);
    auto econd = condition_select<T>(nullptr, enc, params_, cfg_.model);
    return denoise_argmax(econd, n_obs + n_future, derive_seed(cfg_.seed, 0x17A, stream));
  }

  MetricsReport eval_tas_split(const std::vector<VideoRecord>& videos,
                               const std::set<int>& background = {}) const {
    std::vector<std::vector<int>> preds, gts;
    for (std::size_t vi = 0; vi < videos.size(); ++vi) {
      preds.push_back(infer_tas(videos[vi].features.data(), videos[vi].n_frames, vi));
      gts.push_back(videos[vi].labels);
    }
    return eval_tas(preds, gts, background);
  }

  MetricsReport eval_lta_split(const std::vector<VideoRecord>& videos,
                               const EvalProtocol& proto) const {
    std::vector<std::vector<int>> gts;
    for (const auto& v : videos) gts.push_back(v.labels);
    LtaPredictFn predict = [&](std::size_t vi, std::size_t n_obs, std::size_t n_future) {
      // only the observed rows cross this boundary
      return infer_lta(videos[vi].features.data(), n_obs, n_future, vi);
    };
    MetricsReport r;
    r.lta_cells = eval_lta_grid(gts, predict, proto);
    return r;
  }

  std::vector<VideoRecord> prepare_split(const Dataset& ds, const std::vector<std::size_t>& idx) const {
    std::vector<VideoRecord> out;
    for (std::size_t i : idx)
      out.push_back(subsample(ds.videos[i], static_cast<std::size_t>(cfg_.sample_rate)));
    return out;
  }

  void save_checkpoint(const std::string& path) const;
  static Trainer<T> load_checkpoint(const std::string& path);

 private:
  Tensor<T> to_tensor(const float* data, std::size_t n_frames) const {
    const std::size_t dim = cfg_.model.feature_dim;
    Tensor<T> f = Tensor<T>::zeros({n_frames, dim});
    for (std::size_t i = 0; i < n_frames * dim; ++i) f.data[i] = static_cast<T>(data[i]);
    return f;
  }

  void validate_data(const Dataset& ds) const {
    if (ds.label_map.names.size() != cfg_.model.num_classes)
      throw std::invalid_argument("trainer: dataset has " + std::to_string(ds.label_map.names.size()) +
                                  " classes but config expects " + std::to_string(cfg_.model.num_classes));
    for (const auto& v : ds.videos)
      if (v.feature_dim != cfg_.model.feature_dim)
        throw std::invalid_argument("trainer: feature dim mismatch for " + v.id);
  }

  LossBreakdown<T> backprop_video(const VideoRecord& video, ParamMap<T>& grad_acc) {
    const std::size_t tlen = video.n_frames;
    const std::size_t k = cfg_.model.num_classes;
    const T scale = static_cast<T>(cfg_.model.signal_scale);

    const std::vector<double> soft_b = soft_boundary(video.labels, cfg_.boundary_sigma);
    TrainMaskContext ctx;
    ctx.n_frames = tlen;
    ctx.labels = &video.labels;
    ctx.soft_boundary = &soft_b;
    ctx.random_spec = cfg_.random_mask;
    // clamp the clip count for short videos
    const std::size_t n_clips_total = (tlen + ctx.random_spec.clip_size - 1) / ctx.random_spec.clip_size;
    ctx.random_spec.n_clips = std::min(ctx.random_spec.n_clips, n_clips_total);
    ctx.alpha_set = cfg_.alpha_set;
    ctx.enabled = enabled_masks_;
    auto [mask_type, mask] = choose_training_mask(rng_, ctx);

    Tensor<T> onehot = Tensor<T>::zeros({tlen, k});
    for (std::size_t t = 0; t < tlen; ++t) onehot.at(t, static_cast<std::size_t>(video.labels[t])) = T(1);
    Tensor<T> a0 = scale_labels(onehot, scale);
    const int s = static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(sched_.S) + 1));
    Tensor<T> eps = Tensor<T>::zeros({tlen, k});
    for (T& v : eps.data) v = static_cast<T>(rng_.normal());
    Tensor<T> a_s = forward_noise(a0, s, eps, sched_);
    clamp_inplace(a_s, -scale, scale);

    Tape<T> tape;
    ParamMap<T> w;
    for (const auto& [name, t] : params_) w.emplace(name, tape.watch(t));

    Tensor<T> f = to_tensor(video.features.data(), tlen);
    Tensor<T> f_masked = op::apply_mask(&tape, f, mask, w.at("mask_token"));
    auto enc = encoder_forward(&tape, f_masked, w, cfg_.model);
    auto econd = condition_select(&tape, enc, w, cfg_.model);
    auto dec = decoder_forward(&tape, a_s, s, econd, w, cfg_.model);

    LossWeights weights = cfg_.weights;
    if (cfg_.drop_enc_loss) weights.enc_ce = weights.enc_smo = weights.enc_bd = 0.0;
    std::vector<std::uint8_t> dec_include;
    const std::vector<std::uint8_t>* dec_filter = nullptr;
    if (cfg_.drop_dec_obs_loss) {
      // keep decoder losses only where the input was masked
      dec_include.resize(tlen);
      for (std::size_t t = 0; t < tlen; ++t) dec_include[t] = mask[t] ? 0 : 1;
      dec_filter = &dec_include;
    }
    auto [loss, bd] = total_loss(&tape, onehot, enc.probs, dec.probs, soft_b, weights,
                                 static_cast<T>(cfg_.smooth_tau), nullptr, dec_filter);
    if (!loss.all_finite())
      throw std::runtime_error("train_step: non-finite loss on " + video.id + " (mask " +
                               mask_type_name(mask_type) + ", s=" + std::to_string(s) + ")");
    tape.backward(loss);
    for (auto& [name, g] : grad_acc) {
      const auto& src = tape.grad(w.at(name).node);
      kern::ops<T>().axpy(T(1), src.data(), g.data.data(), g.numel());
    }
    return bd;
  }

  std::vector<int> denoise_argmax(const Tensor<T>& econd, std::size_t tlen, std::uint64_t seed) const {
    const T scale = static_cast<T>(cfg_.model.signal_scale);
    DecodeFn<T> decode = [&](const Tensor<T>& a_s, int s) {
      auto dec = decoder_forward<T>(nullptr, a_s, s, econd, params_, cfg_.model);
      Tensor<T> x0 = Tensor<T>::zeros(dec.probs.shape);
      for (std::size_t i = 0; i < x0.numel(); ++i)
        x0.data[i] = (dec.probs.data[i] * T(2) - T(1)) * scale;
      return x0;
    };
    Rng r(seed);
    Tensor<T> final_x0 = denoise_loop(decode, tlen, cfg_.model.num_classes, cfg_.inference_steps,
                                      sched_, scale, r);
    std::vector<int> labels(tlen);
    for (std::size_t t = 0; t < tlen; ++t) {
      const T* row = final_x0.row(t);
      std::size_t best = 0;
      for (std::size_t j = 1; j < cfg_.model.num_classes; ++j)
        if (row[j] > row[best]) best = j;
      labels[t] = static_cast<int>(best);
    }
    return labels;
  }

  TrainConfig cfg_;
  Schedule sched_;
  Rng rng_;
  ParamMap<T> params_;
  AdamState<T> adam_;
  std::vector<MaskType> enabled_masks_;
  int epoch_ = 0;
};

// ---- checkpoint format ----
// "AFCK" | u32le version | u64le header length | header JSON | raw blobs.
// The header carries the config, counters, rng state, and a blob table with
// shapes, offsets, byte sizes, and CRC32 checksums.

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void append_blob(std::string& payload, nlohmann::json& table, const std::string& name,
                 const Tensor<T>& t) {
  nlohmann::json e;
  e["name"] = name;
  e["shape"] = t.shape;
  e["dtype"] = precision_name<T>();
  e["offset"] = payload.size();
  std::string bytes;
  bytes.reserve(t.numel() * sizeof(T));
  for (const T& v : t.data) {
    if constexpr (sizeof(T) == 4) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      append_u32le(bytes, bits);
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      append_u64le(bytes, bits);
    }
  }
  e["bytes"] = bytes.size();
  e["crc32"] = crc32(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  payload += bytes;
  table.push_back(e);
}

template <typename T>
Tensor<T> read_blob(const std::string& payload, const nlohmann::json& e) {
  const std::size_t offset = e.at("offset").get<std::size_t>();
  const std::size_t bytes = e.at("bytes").get<std::size_t>();
  if (e.at("dtype").get<std::string>() != precision_name<T>())
    throw std::runtime_error("checkpoint: precision mismatch for blob " + e.at("name").get<std::string>());
  if (offset + bytes > payload.size()) throw std::runtime_error("checkpoint: blob out of range");
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data()) + offset;
  if (crc32(p, bytes) != e.at("crc32").get<std::uint32_t>())
    throw std::runtime_error("checkpoint: checksum mismatch for blob " + e.at("name").get<std::string>());
  Tensor<T> t = Tensor<T>::zeros(e.at("shape").get<std::vector<std::size_t>>());
  if (bytes != t.numel() * sizeof(T)) throw std::runtime_error("checkpoint: blob size mismatch");
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if constexpr (sizeof(T) == 4) {
      const std::uint32_t bits = read_u32le(p + i * 4);
      std::memcpy(&t.data[i], &bits, 4);
    } else {
      const std::uint64_t bits = read_u64le(p + i * 8);
      std::memcpy(&t.data[i], &bits, 8);
    }
  }
  return t;
}

template <typename T>
void Trainer<T>::save_checkpoint(const std::string& path) const {
  nlohmann::json header;
  header["config"] = config_to_json(cfg_);
  header["precision"] = precision_name<T>();
  header["epoch"] = epoch_;
  header["adam_step"] = adam_.step;
  {
    nlohmann::json st = nlohmann::json::array();
    for (std::uint64_t wrd : rng_.state()) st.push_back(std::to_string(wrd));
    header["rng"] = st;
  }
  nlohmann::json table = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, t] : params_) append_blob(payload, table, "param." + name, t);
  for (const auto& [name, t] : adam_.m) append_blob(payload, table, "adam_m." + name, t);
  for (const auto& [name, t] : adam_.v) append_blob(payload, table, "adam_v." + name, t);
  header["blobs"] = table;

  std::string out = "AFCK";
  append_u32le(out, kCheckpointVersion);
  const std::string hdr = header.dump();
  append_u64le(out, hdr.size());
  out += hdr;
  out += payload;
  write_file_bytes(path, out);
}

// One full run: train from scratch, then evaluate TAS and LTA on the test
// split.
template <typename T>
RunReport train_and_report(const TrainConfig& cfg, const Dataset& ds, const EvalProtocol& proto,
                           Trainer<T>* out_trainer = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer<T> tr(cfg);
  RunReport rep;
  rep.seed = cfg.seed;
  rep.precision = precision_name<T>();
  tr.fit(ds, &rep);
  const std::vector<VideoRecord> test = tr.prepare_split(ds, ds.test_indices);
  if (!test.empty()) {
    rep.tas = tr.eval_tas_split(test, proto.background);
    rep.lta = tr.eval_lta_split(test, proto);
  }
  rep.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out_trainer) *out_trainer = std::move(tr);
  return rep;
}

struct AblationArm {
  std::string name;
  TrainConfig cfg;
};

// full model, each loss toggle, and each mask type dropped; seeds are shared
// so arms differ only in the toggle.
inline std::vector<AblationArm> standard_ablation_arms(const TrainConfig& base) {
  std::vector<AblationArm> arms;
  arms.push_back({"full", base});
  {
    TrainConfig c = base;
    c.drop_enc_loss = true;
    arms.push_back({"drop_enc_loss", c});
  }
  {
    TrainConfig c = base;
    c.drop_dec_obs_loss = true;
    arms.push_back({"drop_dec_obs_loss", c});
  }
  for (MaskType t : {MaskType::none, MaskType::anticipative, MaskType::random, MaskType::relation,
                     MaskType::boundary}) {
    TrainConfig c = base;
    c.disabled_masks = {mask_type_name(t)};
    arms.push_back({std::string("drop_mask_") + mask_type_name(t), c});
  }
  return arms;
}

template <typename T>
std::vector<std::pair<std::string, RunReport>> run_ablation(const std::vector<AblationArm>& arms,
                                                            const Dataset& ds,
                                                            const EvalProtocol& proto) {
  std::vector<std::pair<std::string, RunReport>> out;
  for (const AblationArm& arm : arms)
    out.emplace_back(arm.name, train_and_report<T>(arm.cfg, ds, proto));
  return out;
}

template <typename T>
Trainer<T> Trainer<T>::load_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "AFCK") != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = read_u32le(p + 4);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t hlen = read_u64le(p + 8);
  if (16 + hlen > bytes.size()) throw std::runtime_error("checkpoint: truncated header");
  const nlohmann::json header = nlohmann::json::parse(bytes.substr(16, hlen));
  if (header.at("precision").get<std::string>() != precision_name<T>())
    throw std::runtime_error("checkpoint: precision mismatch (checkpoint is " +
                             header.at("precision").get<std::string>() + ")");
  TrainConfig cfg = config_profile("desk");
  config_apply_json(cfg, header.at("config"));
  Trainer<T> tr(cfg);
  tr.epoch_ = header.at("epoch").get<int>();
  tr.adam_.step = header.at("adam_step").get<std::int64_t>();
  {
    std::array<std::uint64_t, 4> st{};
    const auto& jr = header.at("rng");
    for (std::size_t i = 0; i < 4; ++i) st[i] = std::stoull(jr.at(i).get<std::string>());
    tr.rng_.set_state(st);
  }
  const std::string payload = bytes.substr(16 + hlen);
  tr.params_.clear();
  for (const auto& e : header.at("blobs")) {
    const std::string name = e.at("name").get<std::string>();
    if (name.rfind("param.", 0) == 0)
      tr.params_.emplace(name.substr(6), read_blob<T>(payload, e));
    else if (name.rfind("adam_m.", 0) == 0)
      tr.adam_.m.emplace(name.substr(7), read_blob<T>(payload, e));
    else if (name.rfind("adam_v.", 0) == 0)
      tr.adam_.v.emplace(name.substr(7), read_blob<T>(payload, e));
    else
      throw std::runtime_error("checkpoint: unknown blob " + name);
  }
  // shape table must match a fresh init of the stored config
  Rng check_rng(derive_seed(cfg.seed, 0xA11, 0));
  const ParamMap<T> expect = init_params<T>(cfg.model, check_rng);
  if (expect.size() != tr.params_.size()) throw std::runtime_error("checkpoint: parameter set mismatch");
  for (const auto& [name, t] : expect) {
    auto it = tr.params_.find(name);
    if (it == tr.params_.end() || it->second.shape != t.shape)
      throw std::runtime_error("checkpoint: shape table mismatch at " + name);
  }
  return tr;
}

}  // namespace actdiff

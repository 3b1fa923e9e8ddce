#include "actdiff/engine.hpp"

#include <fstream>

namespace actdiff {

TrainConfig config_profile(const std::string& name) {
  TrainConfig c;  // the desk-scale defaults
  if (name == "desk") return c;
  if (name == "salads50") {
    c.epochs = 5000;
    c.lr = 5e-4;
    c.weight_decay = 0.0;
    c.sample_rate = 8;
    c.diffusion_steps = 1000;
    c.inference_steps = 25;
    c.beta_end = 0.02;
    c.random_mask = {10, 25};
    c.weights = {0.5, 0.1, 0.0, 0.5, 0.1, 0.1};
    c.model.n_enc_layers = 10;
    c.model.n_dec_layers = 8;
    c.model.enc_dim = 64;
    c.model.dec_dim = 24;
    c.model.num_classes = 19;
    c.model.feature_dim = 2048;
    c.model.cond_layer_ids = {5, 7, 9};
    return c;
  }
  if (name == "breakfast") {
    c.epochs = 1000;
    c.lr = 1e-4;
    c.weight_decay = 0.0;
    c.sample_rate = 1;
    c.diffusion_steps = 1000;
    c.inference_steps = 25;
    c.beta_end = 0.02;
    c.random_mask = {10, 10};
    c.weights = {0.5, 0.025, 0.0, 0.5, 0.025, 0.1};
    c.model.n_enc_layers = 12;
    c.model.n_dec_layers = 8;
    c.model.enc_dim = 256;
    c.model.dec_dim = 128;
    c.model.num_classes = 48;
    c.model.feature_dim = 2048;
    c.model.cond_layer_ids = {5, 7, 9};
    return c;
  }
  if (name == "gtea") {
    c.epochs = 10000;
    c.lr = 5e-4;
    c.weight_decay = 1e-6;
    c.sample_rate = 1;
    c.diffusion_steps = 1000;
    c.inference_steps = 25;
    c.beta_end = 0.02;
    c.random_mask = {10, 20};
    c.weights = {0.5, 0.1, 0.0, 0.5, 0.1, 0.1};
    c.model.n_enc_layers = 10;
    c.model.n_dec_layers = 8;
    c.model.enc_dim = 64;
    c.model.dec_dim = 24;
    c.model.num_classes = 11;
    c.model.feature_dim = 2048;
    c.model.cond_layer_ids = {7, 9};
    return c;
  }
  throw std::invalid_argument("unknown config profile: " + name);
}

namespace {

template <typename V>
void maybe(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

void config_apply_json(TrainConfig& c, const nlohmann::json& j) {
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "lr", c.lr);
  maybe(j, "weight_decay", c.weight_decay);
  maybe(j, "seed", c.seed);
  maybe(j, "diffusion_steps", c.diffusion_steps);
  maybe(j, "inference_steps", c.inference_steps);
  maybe(j, "beta_start", c.beta_start);
  maybe(j, "beta_end", c.beta_end);
  maybe(j, "alpha_set", c.alpha_set);
  maybe(j, "boundary_sigma", c.boundary_sigma);
  maybe(j, "smooth_tau", c.smooth_tau);
  maybe(j, "sample_rate", c.sample_rate);
  maybe(j, "drop_enc_loss", c.drop_enc_loss);
  maybe(j, "drop_dec_obs_loss", c.drop_dec_obs_loss);
  maybe(j, "disabled_masks", c.disabled_masks);
  if (j.contains("random_mask")) {
    const auto& r = j.at("random_mask");
    maybe(r, "clip_size", c.random_mask.clip_size);
    maybe(r, "n_clips", c.random_mask.n_clips);
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    maybe(w, "enc_ce", c.weights.enc_ce);
    maybe(w, "enc_smo", c.weights.enc_smo);
    maybe(w, "enc_bd", c.weights.enc_bd);
    maybe(w, "dec_ce", c.weights.dec_ce);
    maybe(w, "dec_smo", c.weights.dec_smo);
    maybe(w, "dec_bd", c.weights.dec_bd);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    maybe(m, "n_enc_layers", c.model.n_enc_layers);
    maybe(m, "n_dec_layers", c.model.n_dec_layers);
    maybe(m, "enc_dim", c.model.enc_dim);
    maybe(m, "dec_dim", c.model.dec_dim);
    maybe(m, "num_classes", c.model.num_classes);
    maybe(m, "feature_dim", c.model.feature_dim);
    maybe(m, "w_max", c.model.w_max);
    maybe(m, "cond_layer_ids", c.model.cond_layer_ids);
    maybe(m, "signal_scale", c.model.signal_scale);
    maybe(m, "norm_eps", c.model.norm_eps);
    maybe(m, "conv_kernel", c.model.conv_kernel);
  }
}

nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  j["diffusion_steps"] = c.diffusion_steps;
  j["inference_steps"] = c.inference_steps;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["alpha_set"] = c.alpha_set;
  j["boundary_sigma"] = c.boundary_sigma;
  j["smooth_tau"] = c.smooth_tau;
  j["sample_rate"] = c.sample_rate;
  j["drop_enc_loss"] = c.drop_enc_loss;
  j["drop_dec_obs_loss"] = c.drop_dec_obs_loss;
  j["disabled_masks"] = c.disabled_masks;
  j["random_mask"] = {{"clip_size", c.random_mask.clip_size}, {"n_clips", c.random_mask.n_clips}};
  j["loss_weights"] = {{"enc_ce", c.weights.enc_ce}, {"enc_smo", c.weights.enc_smo},
                       {"enc_bd", c.weights.enc_bd}, {"dec_ce", c.weights.dec_ce},
                       {"dec_smo", c.weights.dec_smo}, {"dec_bd", c.weights.dec_bd}};
  j["model"] = {{"n_enc_layers", c.model.n_enc_layers},
                {"n_dec_layers", c.model.n_dec_layers},
                {"enc_dim", c.model.enc_dim},
                {"dec_dim", c.model.dec_dim},
                {"num_classes", c.model.num_classes},
                {"feature_dim", c.model.feature_dim},
                {"w_max", c.model.w_max},
                {"cond_layer_ids", c.model.cond_layer_ids},
                {"signal_scale", c.model.signal_scale},
                {"norm_eps", c.model.norm_eps},
                {"conv_kernel", c.model.conv_kernel}};
  return j;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  TrainConfig c = config_profile(j.value("profile", "desk"));
  config_apply_json(c, j);
  return c;
}

nlohmann::json RunReport::to_json(bool include_wall_clock) const {
  nlohmann::json j;
  j["seed"] = seed;
  j["precision"] = precision;
  nlohmann::json losses = nlohmann::json::array();
  for (const EpochLoss& e : epoch_losses)
    losses.push_back({{"enc_ce", e.enc_ce},
                      {"enc_smo", e.enc_smo},
                      {"enc_bd", e.enc_bd},
                      {"dec_ce", e.dec_ce},
                      {"dec_smo", e.dec_smo},
                      {"dec_bd", e.dec_bd},
                      {"total", e.total}});
  j["epoch_losses"] = losses;
  auto cells = [](const MetricsReport& r) {
    nlohmann::json out = nlohmann::json::array();
    for (const LtaCell& c : r.lta_cells)
      out.push_back({{"alpha", c.alpha},
                     {"beta", c.beta},
                     {"moc", c.moc_mean},
                     {"n_videos", c.n_videos},
                     {"n_skipped", c.n_skipped}});
    return out;
  };
  if (tas.has_tas)
    j["tas"] = {{"accuracy", tas.accuracy}, {"edit", tas.edit},   {"f1_10", tas.f1_10},
                {"f1_25", tas.f1_25},       {"f1_50", tas.f1_50}};
  j["lta"] = cells(lta);
  if (include_wall_clock) j["wall_clock_sec"] = wall_clock_sec;
  return j;
}

}  // namespace actdiff

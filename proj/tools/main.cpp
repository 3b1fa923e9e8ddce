#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "actdiff/engine.hpp"
#include "actdiff/svg.hpp"

namespace fs = std::filesystem;
using namespace actdiff;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
  std::string precision = "f32";
};

TrainConfig resolve_config(const GlobalOpts& g) {
  TrainConfig cfg = g.config_path.empty() ? config_profile("desk") : load_config_file(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

void write_reports(const std::string& out_dir, const std::string& stem, const std::string& split,
                   const MetricsReport& rep) {
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / (stem + ".json")).string(), report_to_json(split, rep));
  write_text((fs::path(out_dir) / (stem + ".csv")).string(), report_to_csv(split, rep));
}

template <typename T>
int cmd_train(const GlobalOpts& g, const std::string& data_manifest, const std::string& resume) {
  TrainConfig cfg = resolve_config(g);
  Dataset ds = load_dataset(data_manifest);
  fs::create_directories(g.out_dir);

  Trainer<T> tr = resume.empty() ? Trainer<T>(cfg) : Trainer<T>::load_checkpoint(resume);
  RunReport rep;
  rep.seed = tr.config().seed;
  rep.precision = precision_name<T>();
  const auto t0 = std::chrono::steady_clock::now();
  tr.fit(ds, &rep, [&](int epoch) {
    if (epoch % 50 == 0 || epoch == tr.config().epochs) {
      const EpochLoss& e = rep.epoch_losses.back();
      std::cout << "epoch " << epoch << " total " << e.total << " dec_ce " << e.dec_ce << "\n";
    }
  });
  const std::vector<VideoRecord> test = tr.prepare_split(ds, ds.test_indices);
  if (!test.empty()) {
    rep.tas = tr.eval_tas_split(test);
    rep.lta = tr.eval_lta_split(test, EvalProtocol{});
  }
  rep.wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  tr.save_checkpoint((fs::path(g.out_dir) / "checkpoint.afck").string());
  write_text((fs::path(g.out_dir) / "report.json").string(), rep.to_json().dump(2) + "\n");
  std::cout << "checkpoint + report written to " << g.out_dir << "\n";
  return 0;
}

template <typename T>
int cmd_eval_tas(const GlobalOpts& g, const std::string& ckpt, const std::string& data_manifest,
                 const std::string& split) {
  Trainer<T> tr = Trainer<T>::load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_manifest);
  const auto& idx = split == "train" ? ds.train_indices : ds.test_indices;
  MetricsReport rep = tr.eval_tas_split(tr.prepare_split(ds, idx));
  write_reports(g.out_dir, "tas_metrics", split, rep);
  std::cout << report_to_csv(split, rep);
  return 0;
}

template <typename T>
int cmd_eval_lta(const GlobalOpts& g, const std::string& ckpt, const std::string& data_manifest,
                 const std::string& split, bool no_gt_length, double r) {
  Trainer<T> tr = Trainer<T>::load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_manifest);
  const auto& idx = split == "train" ? ds.train_indices : ds.test_indices;
  EvalProtocol proto;
  proto.use_gt_length = !no_gt_length;
  proto.r = r;
  MetricsReport rep = tr.eval_lta_split(tr.prepare_split(ds, idx), proto);
  write_reports(g.out_dir, "lta_metrics", split, rep);
  std::cout << report_to_csv(split, rep);
  return 0;
}

template <typename T>
int cmd_infer(const GlobalOpts& g, const std::string& ckpt, const std::string& features_path,
              const std::string& mapping_path, const std::string& task, double alpha, double r) {
  Trainer<T> tr = Trainer<T>::load_checkpoint(ckpt);
  FeatureMatrix f = load_features(features_path);
  LabelMap map;
  if (!mapping_path.empty())
    map = load_label_map(mapping_path);
  else
    for (std::size_t k = 0; k < tr.config().model.num_classes; ++k)
      map.names.push_back("class_" + std::to_string(k));

  std::vector<int> labels;
  std::size_t n_obs = f.n_frames;
  if (task == "tas") {
    labels = tr.infer_tas(f.data.data(), f.n_frames);
  } else {
    n_obs = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(f.n_frames)));
    n_obs = std::max<std::size_t>(1, std::min(n_obs, f.n_frames));
    const auto n_future = static_cast<std::size_t>(std::llround(r * static_cast<double>(n_obs)));
    labels = tr.infer_lta(f.data.data(), n_obs, n_future);
  }
  fs::create_directories(g.out_dir);
  const std::string out = (fs::path(g.out_dir) / "prediction.txt").string();
  save_labels(out, labels, map);
  std::cout << "wrote " << out << " (" << labels.size() << " frames, observed " << n_obs << ")\n";
  return 0;
}

// Micro-config finite-difference check over the whole pipeline; exit 0 iff
// the max relative error clears 1e-4.
int cmd_gradcheck(const GlobalOpts& g, int n_seeds) {
  const std::uint64_t base = g.seed_set ? g.seed : 1;
  double worst = 0.0;
  for (int i = 0; i < n_seeds; ++i) {
    Rng rng(base + static_cast<std::uint64_t>(i));
    ModelConfig cfg;
    cfg.n_enc_layers = 2;
    cfg.n_dec_layers = 2;
    cfg.enc_dim = 6;
    cfg.dec_dim = 6;
    cfg.num_classes = 3;
    cfg.feature_dim = 4;
    cfg.w_max = 5;
    cfg.cond_layer_ids = {1, 2};
    auto params = init_params<double>(cfg, rng);

    const std::size_t tlen = 8;
    Tensor<double> f = Tensor<double>::zeros({tlen, cfg.feature_dim});
    for (auto& v : f.data) v = rng.normal();
    std::vector<int> labels(tlen);
    for (std::size_t t = 0; t < tlen; ++t) labels[t] = static_cast<int>(rng.uniform_int(cfg.num_classes));
    const auto soft_b = soft_boundary(labels, 1.0);
    Tensor<double> onehot = Tensor<double>::zeros({tlen, cfg.num_classes});
    for (std::size_t t = 0; t < tlen; ++t) onehot.at(t, static_cast<std::size_t>(labels[t])) = 1.0;
    const Schedule sched = make_schedule(50);
    Tensor<double> a0 = scale_labels(onehot, 1.0);
    Tensor<double> eps = Tensor<double>::zeros(a0.shape);
    for (auto& v : eps.data) v = rng.normal();
    const int s = 1 + static_cast<int>(rng.uniform_int(50));
    Tensor<double> a_s = forward_noise(a0, s, eps, sched);
    clamp_inplace(a_s, -1.0, 1.0);
    const MaskVector mask = mask_anticipative(tlen, 5);

    ScalarFn<double> fn = [&](Tape<double>* tp, ParamMap<double>& w) {
      Tensor<double> fp = op::apply_mask(tp, f, mask, w.at("mask_token"));
      auto enc = encoder_forward(tp, fp, w, cfg);
      auto econd = condition_select(tp, enc, w, cfg);
      auto dec = decoder_forward(tp, a_s, s, econd, w, cfg);
      LossWeights lw;
      lw.enc_bd = 0.05;
      return total_loss(tp, onehot, enc.probs, dec.probs, soft_b, lw, 4.0).first;
    };
    const FdCheckResult res = finite_diff_check<double>(fn, params, 1e-5);
    std::cout << "seed " << base + static_cast<std::uint64_t>(i) << ": max rel err "
              << res.max_rel_err << " (" << res.worst_param << ")\n";
    worst = std::max(worst, res.max_rel_err);
  }
  std::cout << "worst over " << n_seeds << " seeds: " << worst << "\n";
  return worst <= 1e-4 ? 0 : 1;
}

template <typename T>
int cmd_ablate(const GlobalOpts& g, const std::string& data_manifest) {
  TrainConfig cfg = resolve_config(g);
  Dataset ds = load_dataset(data_manifest);
  const auto arms = standard_ablation_arms(cfg);
  const auto results = run_ablation<T>(arms, ds, EvalProtocol{});
  fs::create_directories(g.out_dir);
  nlohmann::json out = nlohmann::json::array();
  const RunReport* full = nullptr;
  for (const auto& [name, rep] : results)
    if (name == "full") full = &rep;
  for (const auto& [name, rep] : results) {
    nlohmann::json j;
    j["arm"] = name;
    j["report"] = rep.to_json();
    if (full && &rep != full) {
      j["delta_tas_accuracy"] = rep.tas.accuracy - full->tas.accuracy;
      nlohmann::json dm = nlohmann::json::array();
      for (std::size_t i = 0; i < rep.lta.lta_cells.size() && i < full->lta.lta_cells.size(); ++i)
        dm.push_back(rep.lta.lta_cells[i].moc_mean - full->lta.lta_cells[i].moc_mean);
      j["delta_moc"] = dm;
    }
    out.push_back(j);
    std::cout << "arm " << name << ": tas acc " << rep.tas.accuracy << "\n";
  }
  write_text((fs::path(g.out_dir) / "ablation.json").string(), out.dump(2) + "\n");
  return 0;
}

template <typename T>
int cmd_plot(const GlobalOpts& g, const std::string& ckpt, const std::string& data_manifest,
             const std::string& split, double alpha, double r, bool no_gt_length, double beta) {
  Trainer<T> tr = Trainer<T>::load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_manifest);
  const auto& idx = split == "train" ? ds.train_indices : ds.test_indices;
  const std::vector<VideoRecord> vids = tr.prepare_split(ds, idx);
  fs::create_directories(g.out_dir);
  for (std::size_t vi = 0; vi < vids.size(); ++vi) {
    const VideoRecord& v = vids[vi];
    const std::vector<int> tas = tr.infer_tas(v.features.data(), v.n_frames, vi);
    auto n_obs = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(v.n_frames)));
    n_obs = std::max<std::size_t>(1, std::min(n_obs, v.n_frames - 1));
    const std::size_t n_future =
        no_gt_length ? static_cast<std::size_t>(std::llround(r * static_cast<double>(n_obs)))
                     : static_cast<std::size_t>(std::ceil(beta * static_cast<double>(v.n_frames)));
    const std::vector<int> lta = tr.infer_lta(v.features.data(), n_obs, std::max<std::size_t>(1, n_future), vi);
    write_barcode_svg((fs::path(g.out_dir) / (v.id + ".svg")).string(), v.labels, tas, lta, n_obs,
                      tr.config().model.num_classes, v.id);
  }
  std::cout << "wrote " << vids.size() << " SVG files to " << g.out_dir << "\n";
  return 0;
}

int cmd_gen_data(const GlobalOpts& g, std::size_t n_train, std::size_t n_test) {
  GrammarSpec spec;
  if (!g.config_path.empty()) {
    std::ifstream f(g.config_path);
    if (!f) throw std::runtime_error("cannot open config " + g.config_path);
    nlohmann::json j = nlohmann::json::parse(f);
    if (j.contains("grammar")) {
      const auto& gj = j.at("grammar");
      if (gj.contains("num_classes")) spec.num_classes = gj.at("num_classes").get<std::size_t>();
      if (gj.contains("feature_dim")) spec.feature_dim = gj.at("feature_dim").get<std::size_t>();
      if (gj.contains("dur_min")) spec.dur_min = gj.at("dur_min").get<std::size_t>();
      if (gj.contains("dur_max")) spec.dur_max = gj.at("dur_max").get<std::size_t>();
      if (gj.contains("feature_noise")) spec.feature_noise = gj.at("feature_noise").get<double>();
      if (gj.contains("smooth_width")) spec.smooth_width = gj.at("smooth_width").get<std::size_t>();
      if (gj.contains("templates")) spec.templates = gj.at("templates").get<std::vector<std::vector<int>>>();
    }
  }
  Rng rng(g.seed_set ? g.seed : 1);
  Dataset ds = generate_dataset(spec, n_train, n_test, rng);
  save_dataset(g.out_dir, ds);
  std::cout << "wrote " << ds.videos.size() << " videos (" << n_train << " train / " << n_test
            << " test) to " << g.out_dir << "\n";
  return 0;
}

template <typename Fn32, typename Fn64>
int with_precision(const std::string& precision, Fn32&& f32, Fn64&& f64) {
  if (precision == "f32") return f32();
  if (precision == "f64") return f64();
  throw CLI::ValidationError("--precision must be f32 or f64");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion-based temporal action segmentation and anticipation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "override rng seed");
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_option("--precision", g.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic benchmark");
  std::size_t n_train = 60, n_test = 20;
  gen->add_option("--train", n_train, "train videos");
  gen->add_option("--test", n_test, "test videos");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string data_manifest, resume;
  train->add_option("--data", data_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "resume from checkpoint")->check(CLI::ExistingFile);

  // eval-tas
  auto* etas = app.add_subcommand("eval-tas", "evaluate segmentation");
  std::string ckpt, split = "test";
  etas->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  etas->add_option("--data", data_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  etas->add_option("--split", split, "train or test");

  // eval-lta
  auto* elta = app.add_subcommand("eval-lta", "evaluate anticipation");
  bool no_gt_length = false;
  double r_mult = 4.0;
  elta->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  elta->add_option("--data", data_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  elta->add_option("--split", split, "train or test");
  elta->add_flag("--no-gt-length", no_gt_length, "derive the horizon as r * n_obs instead of beta * T");
  elta->add_option("--r", r_mult, "future-length multiplier for --no-gt-length");

  // infer
  auto* infer = app.add_subcommand("infer", "run inference on one feature file");
  std::string features_path, mapping_path, task = "tas";
  double alpha = 0.3;
  infer->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  infer->add_option("--features", features_path, "AFT1 feature file")->required()->check(CLI::ExistingFile);
  infer->add_option("--mapping", mapping_path, "label mapping file")->check(CLI::ExistingFile);
  infer->add_option("--task", task, "tas or lta")->check(CLI::IsMember({"tas", "lta"}));
  infer->add_option("--alpha", alpha, "observation ratio for lta");
  infer->add_option("--r", r_mult, "future-length multiplier for lta");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  int n_seeds = 20;
  gc->add_option("--seeds", n_seeds, "number of random seeds");

  // ablate
  auto* abl = app.add_subcommand("ablate", "run the ablation arms");
  abl->add_option("--data", data_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);

  // plot
  auto* plot = app.add_subcommand("plot", "write barcode SVG plots");
  double beta = 0.5;
  plot->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  plot->add_option("--data", data_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  plot->add_option("--split", split, "train or test");
  plot->add_option("--alpha", alpha, "observation ratio for the LTA row");
  plot->add_option("--beta", beta, "anticipation ratio when using gt length");
  plot->add_flag("--no-gt-length", no_gt_length, "horizon r * n_obs for the LTA row");
  plot->add_option("--r", r_mult, "future-length multiplier");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors exit 2, --help exits 0
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen_data(g, n_train, n_test);
    if (train->parsed())
      return with_precision(g.precision, [&] { return cmd_train<float>(g, data_manifest, resume); },
                            [&] { return cmd_train<double>(g, data_manifest, resume); });
    if (etas->parsed())
      return with_precision(g.precision,
                            [&] { return cmd_eval_tas<float>(g, ckpt, data_manifest, split); },
                            [&] { return cmd_eval_tas<double>(g, ckpt, data_manifest, split); });
    if (elta->parsed())
      return with_precision(
          g.precision,
          [&] { return cmd_eval_lta<float>(g, ckpt, data_manifest, split, no_gt_length, r_mult); },
          [&] { return cmd_eval_lta<double>(g, ckpt, data_manifest, split, no_gt_length, r_mult); });
    if (infer->parsed())
      return with_precision(
          g.precision,
          [&] { return cmd_infer<float>(g, ckpt, features_path, mapping_path, task, alpha, r_mult); },
          [&] { return cmd_infer<double>(g, ckpt, features_path, mapping_path, task, alpha, r_mult); });
    if (gc->parsed()) return cmd_gradcheck(g, n_seeds);
    if (abl->parsed())
      return with_precision(g.precision, [&] { return cmd_ablate<float>(g, data_manifest); },
                            [&] { return cmd_ablate<double>(g, data_manifest); });
    if (plot->parsed())
      return with_precision(
          g.precision,
          [&] { return cmd_plot<float>(g, ckpt, data_manifest, split, alpha, r_mult, no_gt_length, beta); },
          [&] { return cmd_plot<double>(g, ckpt, data_manifest, split, alpha, r_mult, no_gt_length, beta); });
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

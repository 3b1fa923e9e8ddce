#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "actdiff/rng.hpp"

// Synthetic activity-grammar dataset plus ingestion of pre-extracted
// features/labels. Feature files use the AFT1 layout: magic "AFT1",
// u32le frame count, u32le channel count, then row-major f32le payload.

namespace actdiff {

struct GrammarSpec {
  std::size_t num_classes = 6;
  std::size_t feature_dim = 16;
  std::vector<std::vector<int>> templates;     // empty -> default set
  std::size_t dur_min = 20, dur_max = 60;      // per-segment frames
  double feature_noise = 0.5;                  // sigma of per-frame noise
  std::size_t smooth_width = 5;                // moving-average window on the noise
  std::vector<std::vector<float>> prototypes;  // empty -> default per-class vectors

  // Fills defaults and validates; call before use.
  void finalize();
};

struct VideoRecord {
  std::string id;
  std::size_t n_frames = 0;
  std::size_t feature_dim = 0;
  std::vector<float> features;  // row-major n_frames x feature_dim
  std::vector<int> labels;
};

struct LabelMap {
  std::vector<std::string> names;  // id -> name
  int id_of(const std::string& name) const;
};

struct Dataset {
  std::vector<VideoRecord> videos;
  std::vector<std::size_t> train_indices, test_indices;
  LabelMap label_map;
};

Dataset generate_dataset(GrammarSpec spec, std::size_t n_train, std::size_t n_test, Rng& rng);

void save_features(const std::string& path, std::size_t n_frames, std::size_t dim, const float* data);

struct FeatureMatrix {
  std::size_t n_frames = 0, dim = 0;
  std::vector<float> data;
};
FeatureMatrix load_features(const std::string& path);

void save_label_map(const std::string& path, const LabelMap& map);
LabelMap load_label_map(const std::string& path);

void save_labels(const std::string& path, const std::vector<int>& labels, const LabelMap& map);
std::vector<int> load_labels(const std::string& path, const LabelMap& map);

// Keeps frames 0, rate, 2*rate, ...
VideoRecord subsample(const VideoRecord& v, std::size_t rate);

// Writes features/, labels/, mapping.txt, and manifest.json under dir.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& manifest_path);

// Repeats the label observed at frame n_obs-1.
std::vector<int> persistence_continuation(const std::vector<int>& observed, std::size_t n_future);

// Monte-Carlo estimate of the grammar-optimal per-frame continuation given
// the observed label prefix. Used as a performance ceiling.
std::vector<int> oracle_continuation(const GrammarSpec& spec, const std::vector<int>& observed,
                                     std::size_t n_future, Rng& rng, std::size_t n_samples = 2000);

}  // namespace actdiff

#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "actdiff/data.hpp"
#include "actdiff/ioutil.hpp"
#include "actdiff/metrics.hpp"

using namespace actdiff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("generated videos follow the grammar") {
  GrammarSpec spec;
  Rng rng(1);
  Dataset ds = generate_dataset(spec, 6, 2, rng);
  spec.finalize();
  REQUIRE(ds.videos.size() == 8);
  CHECK(ds.train_indices.size() == 6);
  CHECK(ds.test_indices.size() == 2);
  CHECK(ds.label_map.names.size() == spec.num_classes);

  for (const auto& v : ds.videos) {
    CHECK(v.labels.size() == v.n_frames);
    CHECK(v.features.size() == v.n_frames * v.feature_dim);
    const auto segs = extract_segments(v.labels);
    bool matched = false;
    for (const auto& tmpl : spec.templates) {
      if (segs.size() != tmpl.size()) continue;
      bool ok = true;
      for (std::size_t i = 0; i < segs.size(); ++i)
        if (segs[i].cls != tmpl[i]) ok = false;
      if (ok) matched = true;
    }
    CHECK(matched);  // label order equals one template
    for (const auto& s : segs) {
      CHECK(s.end - s.start >= spec.dur_min);
      CHECK(s.end - s.start <= spec.dur_max);
    }
  }
}

TEST_CASE("noiseless features equal prototypes and separate perfectly") {
  GrammarSpec spec;
  spec.feature_noise = 0.0;
  Rng rng(2);
  Dataset ds = generate_dataset(spec, 2, 1, rng);
  spec.finalize();
  std::size_t correct = 0, total = 0;
  for (const auto& v : ds.videos) {
    for (std::size_t t = 0; t < v.n_frames; ++t) {
      // features equal the class prototype exactly
      for (std::size_t c = 0; c < v.feature_dim; ++c)
        CHECK(v.features[t * v.feature_dim + c] ==
              spec.prototypes[static_cast<std::size_t>(v.labels[t])][c]);
      // nearest prototype classifies perfectly
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < spec.num_classes; ++k) {
        double d = 0;
        for (std::size_t c = 0; c < v.feature_dim; ++c) {
          const double diff = v.features[t * v.feature_dim + c] - spec.prototypes[k][c];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      total += 1;
      correct += best == static_cast<std::size_t>(v.labels[t]);
    }
  }
  CHECK(correct == total);
}

TEST_CASE("generation is deterministic under a fixed seed") {
  GrammarSpec spec;
  Rng r1(77), r2(77);
  Dataset a = generate_dataset(spec, 3, 1, r1);
  Dataset b = generate_dataset(spec, 3, 1, r2);
  REQUIRE(a.videos.size() == b.videos.size());
  for (std::size_t i = 0; i < a.videos.size(); ++i) {
    CHECK(a.videos[i].labels == b.videos[i].labels);
    CHECK(a.videos[i].features == b.videos[i].features);
  }
}

TEST_CASE("AFT1 round trip and error paths") {
  TempDir tmp("actdiff_test_aft1");
  const std::string path = (tmp.path / "x.aft1").string();
  const std::vector<float> vals = {1.5f, -2.25f, 0.0f, 3.0f, -0.5f, 100.0f};
  save_features(path, 3, 2, vals.data());
  FeatureMatrix m = load_features(path);
  CHECK(m.n_frames == 3);
  CHECK(m.dim == 2);
  CHECK(m.data == vals);
  // byte-level round trip
  const std::string bytes1 = read_file_bytes(path);
  save_features(path, 3, 2, m.data.data());
  CHECK(read_file_bytes(path) == bytes1);

  // little-endian layout is pinned: craft a file by hand
  {
    std::string buf = "AFT1";
    append_u32le(buf, 1);
    append_u32le(buf, 1);
    append_u32le(buf, 0x3f800000u);  // 1.0f
    const std::string p2 = (tmp.path / "hand.aft1").string();
    write_file_bytes(p2, buf);
    FeatureMatrix h = load_features(p2);
    CHECK(h.n_frames == 1);
    CHECK(h.data[0] == 1.0f);
  }

  // truncated payload: 5 floats for a 3x2 header
  {
    std::string buf = "AFT1";
    append_u32le(buf, 3);
    append_u32le(buf, 2);
    for (int i = 0; i < 5; ++i) append_u32le(buf, 0);
    const std::string p3 = (tmp.path / "trunc.aft1").string();
    write_file_bytes(p3, buf);
    CHECK_THROWS_WITH_AS(load_features(p3), doctest::Contains("truncated"), std::runtime_error);
  }

  // bad magic
  {
    const std::string p4 = (tmp.path / "bad.aft1").string();
    write_file_bytes(p4, "NOPE00000000");
    CHECK_THROWS_WITH_AS(load_features(p4), doctest::Contains("magic"), std::runtime_error);
  }

  // non-finite payload
  {
    std::string buf = "AFT1";
    append_u32le(buf, 1);
    append_u32le(buf, 1);
    append_u32le(buf, 0x7fc00000u);  // quiet NaN
    const std::string p5 = (tmp.path / "nan.aft1").string();
    write_file_bytes(p5, buf);
    CHECK_THROWS_WITH_AS(load_features(p5), doctest::Contains("non-finite"), std::runtime_error);
  }
}

TEST_CASE("label files: round trip, trailing newline, unknown names") {
  TempDir tmp("actdiff_test_labels");
  LabelMap map;
  map.names = {"pour", "cut", "mix"};
  const std::string path = (tmp.path / "l.txt").string();
  const std::vector<int> labels = {0, 0, 2, 1, 1};
  save_labels(path, labels, map);
  CHECK(load_labels(path, map) == labels);

  {
    std::ofstream f(path);
    f << "pour\ncut\n\n";  // trailing empty line tolerated
  }
  CHECK(load_labels(path, map) == std::vector<int>{0, 1});

  {
    std::ofstream f(path);
    f << "pour\npour\npour\npour\npour\npour\nchop\n";
  }
  CHECK_THROWS_WITH_AS(load_labels(path, map), doctest::Contains("line 7"), std::runtime_error);

  const std::string mpath = (tmp.path / "map.txt").string();
  save_label_map(mpath, map);
  LabelMap back = load_label_map(mpath);
  CHECK(back.names == map.names);
}

TEST_CASE("subsample") {
  VideoRecord v;
  v.id = "v";
  v.n_frames = 10;
  v.feature_dim = 2;
  for (std::size_t t = 0; t < 10; ++t) {
    v.labels.push_back(static_cast<int>(t));
    v.features.push_back(static_cast<float>(t));
    v.features.push_back(static_cast<float>(t) + 0.5f);
  }
  VideoRecord s1 = subsample(v, 1);
  CHECK(s1.labels == v.labels);
  VideoRecord s3 = subsample(v, 3);
  CHECK(s3.n_frames == 4);  // ceil(10/3)
  CHECK(s3.labels == std::vector<int>{0, 3, 6, 9});
  CHECK(s3.features[2] == 3.0f);
  VideoRecord s100 = subsample(v, 100);
  CHECK(s100.n_frames == 1);
  CHECK_THROWS(subsample(v, 0));
}

TEST_CASE("dataset save/load round trip") {
  GrammarSpec spec;
  Rng rng(3);
  Dataset ds = generate_dataset(spec, 3, 2, rng);
  TempDir tmp("actdiff_test_ds");
  save_dataset(tmp.path.string(), ds);
  Dataset back = load_dataset((tmp.path / "manifest.json").string());
  REQUIRE(back.videos.size() == ds.videos.size());
  CHECK(back.train_indices == ds.train_indices);
  CHECK(back.test_indices == ds.test_indices);
  CHECK(back.label_map.names == ds.label_map.names);
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    CHECK(back.videos[i].id == ds.videos[i].id);
    CHECK(back.videos[i].labels == ds.videos[i].labels);
    CHECK(back.videos[i].features == ds.videos[i].features);  // f32 payload is exact
  }
}

TEST_CASE("grammar oracle beats persistence on anticipation") {
  GrammarSpec spec;
  Rng rng(4);
  Dataset ds = generate_dataset(spec, 0, 12, rng);
  double oracle_total = 0, persist_total = 0;
  std::size_t n = 0;
  Rng orng(5);
  for (std::size_t i : ds.test_indices) {
    const auto& v = ds.videos[i];
    const std::size_t n_obs = (v.n_frames * 3) / 10;
    const std::size_t eval_len = v.n_frames / 5;
    if (n_obs == 0 || n_obs + eval_len > v.n_frames) continue;
    const std::vector<int> observed(v.labels.begin(), v.labels.begin() + static_cast<std::ptrdiff_t>(n_obs));
    auto with_prefix = [&](std::vector<int> cont) {
      std::vector<int> full = observed;
      full.insert(full.end(), cont.begin(), cont.end());
      return full;
    };
    oracle_total += moc(with_prefix(oracle_continuation(spec, observed, eval_len, orng)), v.labels,
                        n_obs, eval_len);
    persist_total += moc(with_prefix(persistence_continuation(observed, eval_len)), v.labels, n_obs,
                         eval_len);
    ++n;
  }
  REQUIRE(n > 0);
  CHECK(oracle_total / n > persist_total / n);
}

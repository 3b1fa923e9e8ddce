#include "actdiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "actdiff/metrics.hpp"

namespace fs = std::filesystem;

namespace actdiff {

void GrammarSpec::finalize() {
  if (num_classes < 2) throw std::invalid_argument("grammar: need at least 2 classes");
  if (dur_min < 1 || dur_max < dur_min) throw std::invalid_argument("grammar: bad duration range");
  if (templates.empty()) {
    if (num_classes < 6) throw std::invalid_argument("grammar: default templates need 6 classes");
    templates = {
        {0, 1, 2, 3, 4},
        {1, 3, 5, 0, 2, 4},
        {2, 5, 1, 4, 0, 3},
        {3, 0, 4, 1, 5, 2, 0},
    };
  }
  for (const auto& t : templates) {
    if (t.empty()) throw std::invalid_argument("grammar: empty template");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] < 0 || static_cast<std::size_t>(t[i]) >= num_classes)
        throw std::invalid_argument("grammar: template class out of range");
      if (i && t[i] == t[i - 1]) throw std::invalid_argument("grammar: adjacent repeat in template");
    }
  }
  if (prototypes.empty()) {
    if (feature_dim < num_classes)
      throw std::invalid_argument("grammar: default prototypes need feature_dim >= num_classes");
    prototypes.assign(num_classes, std::vector<float>(feature_dim, 0.0f));
    for (std::size_t k = 0; k < num_classes; ++k) prototypes[k][k] = 2.0f;
  }
  if (prototypes.size() != num_classes) throw std::invalid_argument("grammar: prototype count mismatch");
  for (const auto& p : prototypes)
    if (p.size() != feature_dim) throw std::invalid_argument("grammar: prototype dim mismatch");
}

namespace {

VideoRecord generate_video(const GrammarSpec& spec, const std::string& id, Rng& rng) {
  VideoRecord v;
  v.id = id;
  v.feature_dim = spec.feature_dim;
  const auto& tmpl = spec.templates[rng.uniform_int(spec.templates.size())];
  for (int cls : tmpl) {
    const std::size_t dur = spec.dur_min + rng.uniform_int(spec.dur_max - spec.dur_min + 1);
    v.labels.insert(v.labels.end(), dur, cls);
  }
  v.n_frames = v.labels.size();

  // Noise is smoothed before being added so that sigma=0 gives the exact
  // prototypes back.
  std::vector<float> noise(v.n_frames * spec.feature_dim);
  for (auto& x : noise) x = static_cast<float>(rng.normal() * spec.feature_noise);
  const std::size_t radius = spec.smooth_width / 2;
  v.features.resize(v.n_frames * spec.feature_dim);
  for (std::size_t t = 0; t < v.n_frames; ++t) {
    const std::size_t lo = t >= radius ? t - radius : 0;
    const std::size_t hi = std::min(v.n_frames - 1, t + radius);
    const auto& proto = spec.prototypes[static_cast<std::size_t>(v.labels[t])];
    for (std::size_t c = 0; c < spec.feature_dim; ++c) {
      float acc = 0.0f;
      for (std::size_t u = lo; u <= hi; ++u) acc += noise[u * spec.feature_dim + c];
      v.features[t * spec.feature_dim + c] = proto[c] + acc / static_cast<float>(hi - lo + 1);
    }
  }
  return v;
}

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Dataset generate_dataset(GrammarSpec spec, std::size_t n_train, std::size_t n_test, Rng& rng) {
  spec.finalize();
  Dataset ds;
  for (std::size_t k = 0; k < spec.num_classes; ++k)
    ds.label_map.names.push_back("act_" + std::to_string(k));
  const std::size_t total = n_train + n_test;
  for (std::size_t i = 0; i < total; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "video_%04zu", i);
    ds.videos.push_back(generate_video(spec, buf, rng));
    (i < n_train ? ds.train_indices : ds.test_indices).push_back(i);
  }
  return ds;
}

void save_features(const std::string& path, std::size_t n_frames, std::size_t dim, const float* data) {
  std::string buf;
  buf.reserve(12 + n_frames * dim * 4);
  buf += "AFT1";
  put_u32le(buf, static_cast<std::uint32_t>(n_frames));
  put_u32le(buf, static_cast<std::uint32_t>(dim));
  for (std::size_t i = 0; i < n_frames * dim; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32le(buf, bits);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_features: cannot open " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("save_features: write failed for " + path);
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_features: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "AFT1") != 0)
    throw std::runtime_error("load_features: bad magic in " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  FeatureMatrix m;
  m.n_frames = get_u32le(p + 4);
  m.dim = get_u32le(p + 8);
  const std::size_t want = 12 + m.n_frames * m.dim * 4;
  if (buf.size() != want)
    throw std::runtime_error("load_features: truncated payload in " + path + " (have " +
                             std::to_string(buf.size()) + " bytes, want " + std::to_string(want) + ")");
  m.data.resize(m.n_frames * m.dim);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const std::uint32_t bits = get_u32le(p + 12 + i * 4);
    float v;
    std::memcpy(&v, &bits, 4);
    if (!std::isfinite(v))
      throw std::runtime_error("load_features: non-finite value at index " + std::to_string(i) +
                               " in " + path);
    m.data[i] = v;
  }
  return m;
}

int LabelMap::id_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

void save_label_map(const std::string& path, const LabelMap& map) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_label_map: cannot open " + path);
  for (std::size_t i = 0; i < map.names.size(); ++i) f << i << " " << map.names[i] << "\n";
}

LabelMap load_label_map(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_label_map: cannot open " + path);
  LabelMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::size_t id;
    std::string name;
    if (!(is >> id >> name))
      throw std::runtime_error("load_label_map: malformed line " + std::to_string(lineno) + " in " + path);
    if (id != map.names.size())
      throw std::runtime_error("load_label_map: non-contiguous id at line " + std::to_string(lineno));
    if (map.id_of(name) >= 0)
      throw std::runtime_error("load_label_map: duplicate name '" + name + "' at line " +
                               std::to_string(lineno));
    map.names.push_back(name);
  }
  return map;
}

void save_labels(const std::string& path, const std::vector<int>& labels, const LabelMap& map) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_labels: cannot open " + path);
  for (int l : labels) f << map.names.at(static_cast<std::size_t>(l)) << "\n";
}

std::vector<int> load_labels(const std::string& path, const LabelMap& map) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_labels: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::vector<int> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int id = map.id_of(lines[i]);
    if (id < 0)
      throw std::runtime_error("load_labels: unknown label '" + lines[i] + "' at line " +
                               std::to_string(i + 1) + " in " + path);
    out.push_back(id);
  }
  return out;
}

VideoRecord subsample(const VideoRecord& v, std::size_t rate) {
  if (rate < 1) throw std::invalid_argument("subsample: rate must be >= 1");
  if (rate == 1) return v;
  VideoRecord out;
  out.id = v.id;
  out.feature_dim = v.feature_dim;
  for (std::size_t t = 0; t < v.n_frames; t += rate) {
    out.labels.push_back(v.labels[t]);
    out.features.insert(out.features.end(), v.features.begin() + static_cast<std::ptrdiff_t>(t * v.feature_dim),
                        v.features.begin() + static_cast<std::ptrdiff_t>((t + 1) * v.feature_dim));
  }
  out.n_frames = out.labels.size();
  return out;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(fs::path(dir) / "features");
  fs::create_directories(fs::path(dir) / "labels");
  save_label_map((fs::path(dir) / "mapping.txt").string(), ds.label_map);
  nlohmann::json manifest;
  manifest["mapping"] = "mapping.txt";
  nlohmann::json vids = nlohmann::json::array();
  auto split_of = [&](std::size_t i) {
    for (std::size_t t : ds.train_indices)
      if (t == i) return "train";
    return "test";
  };
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    const VideoRecord& v = ds.videos[i];
    const std::string fpath = "features/" + v.id + ".aft1";
    const std::string lpath = "labels/" + v.id + ".txt";
    save_features((fs::path(dir) / fpath).string(), v.n_frames, v.feature_dim, v.features.data());
    save_labels((fs::path(dir) / lpath).string(), v.labels, ds.label_map);
    nlohmann::json jv;
    jv["id"] = v.id;
    jv["features"] = fpath;
    jv["labels"] = lpath;
    jv["split"] = split_of(i);
    vids.push_back(jv);
  }
  manifest["videos"] = vids;
  std::ofstream f((fs::path(dir) / "manifest.json").string());
  if (!f) throw std::runtime_error("save_dataset: cannot write manifest");
  f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(f);
  const fs::path base = fs::path(manifest_path).parent_path();
  Dataset ds;
  ds.label_map = load_label_map((base / manifest.at("mapping").get<std::string>()).string());
  for (const auto& jv : manifest.at("videos")) {
    VideoRecord v;
    v.id = jv.at("id").get<std::string>();
    FeatureMatrix m = load_features((base / jv.at("features").get<std::string>()).string());
    v.n_frames = m.n_frames;
    v.feature_dim = m.dim;
    v.features = std::move(m.data);
    v.labels = load_labels((base / jv.at("labels").get<std::string>()).string(), ds.label_map);
    if (v.labels.size() != v.n_frames)
      throw std::runtime_error("load_dataset: feature/label length mismatch for " + v.id);
    const std::string split = jv.at("split").get<std::string>();
    (split == "train" ? ds.train_indices : ds.test_indices).push_back(ds.videos.size());
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

std::vector<int> persistence_continuation(const std::vector<int>& observed, std::size_t n_future) {
  if (observed.empty()) throw std::invalid_argument("persistence: empty observation");
  return std::vector<int>(n_future, observed.back());
}

std::vector<int> oracle_continuation(const GrammarSpec& spec_in, const std::vector<int>& observed,
                                     std::size_t n_future, Rng& rng, std::size_t n_samples) {
  GrammarSpec spec = spec_in;
  spec.finalize();
  if (observed.empty()) throw std::invalid_argument("oracle: empty observation");

  const std::vector<Segment> runs = extract_segments(observed);
  std::vector<const std::vector<int>*> consistent;
  for (const auto& t : spec.templates) {
    if (t.size() < runs.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (t[i] != runs[i].cls) ok = false;
    // completed runs must have grammar-legal durations
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
      const std::size_t d = runs[i].end - runs[i].start;
      if (d < spec.dur_min || d > spec.dur_max) ok = false;
    }
    if (ok) consistent.push_back(&t);
  }
  if (consistent.empty()) return persistence_continuation(observed, n_future);

  const std::size_t elapsed = runs.back().end - runs.back().start;
  const std::size_t cur_seg = runs.size() - 1;
  std::vector<std::vector<std::size_t>> counts(n_future,
                                               std::vector<std::size_t>(spec.num_classes, 0));
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto& tmpl = *consistent[rng.uniform_int(consistent.size())];
    // remaining duration of the segment currently in progress
    const std::size_t floor_d = std::max(elapsed, spec.dur_min);
    if (floor_d > spec.dur_max) continue;  // observation longer than the grammar allows
    std::size_t total_d = floor_d + rng.uniform_int(spec.dur_max - floor_d + 1);
    std::vector<int> cont;
    cont.insert(cont.end(), total_d - elapsed, tmpl[cur_seg]);
    for (std::size_t seg = cur_seg + 1; seg < tmpl.size() && cont.size() < n_future; ++seg) {
      const std::size_t d = spec.dur_min + rng.uniform_int(spec.dur_max - spec.dur_min + 1);
      cont.insert(cont.end(), d, tmpl[seg]);
    }
    while (cont.size() < n_future) cont.push_back(cont.empty() ? observed.back() : cont.back());
    for (std::size_t i = 0; i < n_future; ++i) ++counts[i][static_cast<std::size_t>(cont[i])];
  }
  std::vector<int> out(n_future, observed.back());
  for (std::size_t i = 0; i < n_future; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < spec.num_classes; ++k)
      if (counts[i][k] > counts[i][best]) best = k;
    if (counts[i][best] > 0) out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace actdiff

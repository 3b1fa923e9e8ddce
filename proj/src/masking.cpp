#include "actdiff/masking.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace actdiff {

const char* mask_type_name(MaskType t) {
  switch (t) {
    case MaskType::none: return "none";
    case MaskType::anticipative: return "anticipative";
    case MaskType::random: return "random";
    case MaskType::relation: return "relation";
    case MaskType::boundary: return "boundary";
  }
  return "?";
}

MaskType mask_type_from_name(const std::string& name) {
  for (MaskType t : {MaskType::none, MaskType::anticipative, MaskType::random, MaskType::relation,
                     MaskType::boundary})
    if (name == mask_type_name(t)) return t;
  throw std::invalid_argument("unknown mask type: " + name);
}

MaskVector mask_none(std::size_t n_frames) { return MaskVector(n_frames, 1); }

MaskVector mask_anticipative(std::size_t n_frames, std::size_t n_obs) {
  if (n_obs > n_frames) throw std::invalid_argument("mask_anticipative: n_obs > n_frames");
  MaskVector m(n_frames, 0);
  std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n_obs), std::uint8_t(1));
  return m;
}

MaskVector mask_random(std::size_t n_frames, const RandomMaskSpec& spec, Rng& rng) {
  if (spec.clip_size == 0) throw std::invalid_argument("mask_random: clip_size must be >= 1");
  const std::size_t n_clips_total = (n_frames + spec.clip_size - 1) / spec.clip_size;
  if (spec.n_clips > n_clips_total)
    throw std::invalid_argument("mask_random: n_clips exceeds clip count");
  // partial Fisher-Yates over clip indices
  std::vector<std::size_t> idx(n_clips_total);
  for (std::size_t i = 0; i < n_clips_total; ++i) idx[i] = i;
  MaskVector m(n_frames, 1);
  for (std::size_t i = 0; i < spec.n_clips; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n_clips_total - i));
    std::swap(idx[i], idx[j]);
    const std::size_t lo = idx[i] * spec.clip_size;
    const std::size_t hi = std::min(lo + spec.clip_size, n_frames);
    std::fill(m.begin() + static_cast<std::ptrdiff_t>(lo), m.begin() + static_cast<std::ptrdiff_t>(hi),
              std::uint8_t(0));
  }
  return m;
}

MaskVector mask_relation(const std::vector<int>& labels, const RandomMaskSpec& fallback, Rng& rng) {
  if (labels.empty()) throw std::invalid_argument("mask_relation: empty labels");
  std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2) return mask_random(labels.size(), fallback, rng);
  std::vector<int> classes(present.begin(), present.end());
  const int chosen = classes[rng.uniform_int(classes.size())];
  MaskVector m(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == chosen) m[i] = 0;
  return m;
}

MaskVector mask_boundary(const std::vector<double>& soft_boundary) {
  MaskVector m(soft_boundary.size(), 1);
  for (std::size_t i = 0; i < soft_boundary.size(); ++i)
    if (soft_boundary[i] >= 0.5) m[i] = 0;
  return m;
}

std::pair<MaskType, MaskVector> choose_training_mask(Rng& rng, const TrainMaskContext& ctx) {
  if (ctx.enabled.empty()) throw std::invalid_argument("choose_training_mask: no mask types enabled");
  const MaskType type = ctx.enabled[rng.uniform_int(ctx.enabled.size())];
  switch (type) {
    case MaskType::none:
      return {type, mask_none(ctx.n_frames)};
    case MaskType::anticipative: {
      if (ctx.alpha_set.empty()) throw std::invalid_argument("choose_training_mask: empty alpha set");
      const double alpha = ctx.alpha_set[rng.uniform_int(ctx.alpha_set.size())];
      const auto n_obs = static_cast<std::size_t>(
          std::ceil(alpha * static_cast<double>(ctx.n_frames)));
      return {type, mask_anticipative(ctx.n_frames, std::min(n_obs, ctx.n_frames))};
    }
    case MaskType::random:
      return {type, mask_random(ctx.n_frames, ctx.random_spec, rng)};
    case MaskType::relation:
      if (!ctx.labels) throw std::invalid_argument("choose_training_mask: labels required");
      return {type, mask_relation(*ctx.labels, ctx.random_spec, rng)};
    case MaskType::boundary:
      if (!ctx.soft_boundary) throw std::invalid_argument("choose_training_mask: soft boundary required");
      return {type, mask_boundary(*ctx.soft_boundary)};
  }
  throw std::logic_error("choose_training_mask: unreachable");
}

}  // namespace actdiff

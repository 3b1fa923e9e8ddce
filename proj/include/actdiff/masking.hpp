#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "actdiff/rng.hpp"
#include "actdiff/tape.hpp"

// Frame visibility masks. Bit 1 = visible, 0 = replaced by the mask token.

namespace actdiff {

using MaskVector = std::vector<std::uint8_t>;

enum class MaskType { none, anticipative, random, relation, boundary };

const char* mask_type_name(MaskType t);
MaskType mask_type_from_name(const std::string& name);

struct RandomMaskSpec {
  std::size_t clip_size = 10;  // Q
  std::size_t n_clips = 5;     // clips to hide per draw
};

MaskVector mask_none(std::size_t n_frames);

// Prefix of n_obs visible frames, the rest hidden.
MaskVector mask_anticipative(std::size_t n_frames, std::size_t n_obs);

// Hides spec.n_clips distinct clips of spec.clip_size frames (last clip may
// be short).
MaskVector mask_random(std::size_t n_frames, const RandomMaskSpec& spec, Rng& rng);

// Hides every frame of one randomly chosen class present in the labels.
// Single-class videos fall back to a random mask draw.
MaskVector mask_relation(const std::vector<int>& labels, const RandomMaskSpec& fallback, Rng& rng);

// Hides frames whose soft boundary value is >= 0.5.
MaskVector mask_boundary(const std::vector<double>& soft_boundary);

struct TrainMaskContext {
  std::size_t n_frames = 0;
  const std::vector<int>* labels = nullptr;
  const std::vector<double>* soft_boundary = nullptr;
  RandomMaskSpec random_spec;
  std::vector<double> alpha_set = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<MaskType> enabled = {MaskType::none, MaskType::anticipative, MaskType::random,
                                   MaskType::relation, MaskType::boundary};
};

// Uniform draw over the enabled mask types; anticipative draws its
// observation ratio uniformly from alpha_set.
std::pair<MaskType, MaskVector> choose_training_mask(Rng& rng, const TrainMaskContext& ctx);

// LTA inference input: observed rows followed by n_future mask-token rows.
template <typename T>
std::pair<Tensor<T>, MaskVector> build_anticipation_input(const Tensor<T>& f_obs,
                                                          std::size_t n_future,
                                                          const Tensor<T>& token) {
  if (f_obs.ndim() != 2 || f_obs.rows() == 0) throw std::invalid_argument("anticipation input: empty observation");
  if (n_future == 0) throw std::invalid_argument("anticipation input: need n_future >= 1");
  if (token.numel() != f_obs.cols()) throw std::invalid_argument("anticipation input: token dim mismatch");
  const std::size_t n_obs = f_obs.rows(), dim = f_obs.cols();
  Tensor<T> out = Tensor<T>::zeros({n_obs + n_future, dim});
  for (std::size_t t = 0; t < n_obs; ++t)
    for (std::size_t i = 0; i < dim; ++i) out.at(t, i) = f_obs.at(t, i);
  for (std::size_t t = n_obs; t < n_obs + n_future; ++t)
    for (std::size_t i = 0; i < dim; ++i) out.at(t, i) = token.data[i];
  return {std::move(out), mask_anticipative(n_obs + n_future, n_obs)};
}

}  // namespace actdiff

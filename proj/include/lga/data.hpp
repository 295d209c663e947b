#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lga/rng.hpp"
#include "lga/tensor.hpp"

namespace lga {

struct TaskConfig {
  std::size_t channels = 32;
  std::size_t height = 7;
  std::size_t width = 7;
  std::size_t classes = 4;
  std::size_t patch = 2;        // discriminative patch side, cells
  double strength = 1.0;        // class-signature strength s
  double noise = 0.3;           // white-noise level eta
  std::size_t distractors = 1;

  void validate() const;
};

// One synthetic RoI sample. Classes share background statistics and differ
// only by the signature patch at a random in-bounds position.
struct Instance {
  Tensor features;                    // C x H x W
  std::uint32_t label = 0;
  std::array<double, 2> patch_center{};  // (cy, cx), grid units
  std::array<double, 4> patch_box{};     // (cy, cx, h, w), grid units
};

struct Dataset {
  TaskConfig config;
  std::uint64_t seed = 0;
  std::vector<Instance> instances;
};

// Deterministic orthonormal channel directions derived from the config:
// index 0 backgrounds, index 1 distractor, 2.. the class signatures.
// Requires channels >= classes + 2.
std::vector<std::vector<double>> channel_directions(const TaskConfig& config);

Instance gen_instance(Xoshiro256& rng, const TaskConfig& config);
Instance gen_instance_labeled(Xoshiro256& rng, const TaskConfig& config, std::uint32_t label);

// n instances; labels round-robin then seed-shuffled, features drawn from
// per-index sub-seeds. (seed, config) determines every byte.
Dataset gen_dataset(std::uint64_t seed, std::size_t n, const TaskConfig& config);

// t = ((cy-3.5)/7, (cx-3.5)/7, ln(h/7), ln(w/7))
std::array<double, 4> encode_box_target(const Instance& instance, const TaskConfig& config);

}  // namespace lga

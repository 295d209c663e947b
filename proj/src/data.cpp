#include "lga/data.hpp"

#include <cmath>
#include <stdexcept>

namespace lga {

void TaskConfig::validate() const {
  if (channels == 0 || classes == 0) throw std::invalid_argument("TaskConfig: zero extent");
  if (height != 7 || width != 7) throw std::invalid_argument("TaskConfig: grid is 7x7");
  if (patch < 1 || patch > 7) throw std::invalid_argument("TaskConfig: patch must be 1..7 cells");
  if (strength <= 0.0) throw std::invalid_argument("TaskConfig: signature strength must be positive");
  if (noise < 0.0) throw std::invalid_argument("TaskConfig: noise level must be non-negative");
  if (channels < classes + 2)
    throw std::invalid_argument("TaskConfig: need channels >= classes + 2 for orthogonal signatures");
}

std::vector<std::vector<double>> channel_directions(const TaskConfig& config) {
  config.validate();
  std::size_t c = config.channels;
  std::size_t count = config.classes + 2;

  // Seeded basis, then Gram-Schmidt. The first vector is the normalized
  // all-ones direction so the background field never projects onto a
  // signature. Derivation depends only on (channels, classes).
  SplitMix64 sm(0x4C474153ULL ^ (static_cast<std::uint64_t>(c) << 32) ^ config.classes);
  Xoshiro256 rng(sm.next());

  std::vector<std::vector<double>> dirs;
  dirs.push_back(std::vector<double>(c, 1.0 / std::sqrt(static_cast<double>(c))));
  while (dirs.size() < count) {
    std::vector<double> v(c);
    for (double& x : v) x = rng.normal();
    for (const auto& u : dirs) {
      double dot = 0.0;
      for (std::size_t i = 0; i < c; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < c; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;  // degenerate draw, try again
    for (double& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

Instance gen_instance_labeled(Xoshiro256& rng, const TaskConfig& config, std::uint32_t label) {
  config.validate();
  if (label >= config.classes) throw std::invalid_argument("gen_instance: label out of range");
  auto dirs = channel_directions(config);
  const auto& v_bg = dirs[0];
  const auto& v_dist = dirs[1];
  const auto& sig = dirs[2 + label];

  std::size_t c = config.channels, h = config.height, w = config.width, p = config.patch;
  std::size_t hw = h * w;
  std::vector<double> feat(c * hw, 0.0);

  // (1) background: random spatial field along a class-independent direction
  for (std::size_t cell = 0; cell < hw; ++cell) {
    double b = rng.normal();
    for (std::size_t ch = 0; ch < c; ++ch) feat[ch * hw + cell] += b * v_bg[ch];
  }

  // (2) the label's signature over a random in-bounds p x p block
  std::size_t ty = rng.below(h - p + 1);
  std::size_t tx = rng.below(w - p + 1);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      std::size_t cell = (ty + i) * w + (tx + j);
      for (std::size_t ch = 0; ch < c; ++ch)
        feat[ch * hw + cell] += config.strength * sig[ch];
    }

  // (3) class-independent distractor pattern at other positions
  for (std::size_t d = 0; d < config.distractors; ++d) {
    std::size_t dy, dx;
    do {
      dy = rng.below(h - p + 1);
      dx = rng.below(w - p + 1);
    } while (dy == ty && dx == tx);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        std::size_t cell = (dy + i) * w + (dx + j);
        for (std::size_t ch = 0; ch < c; ++ch)
          feat[ch * hw + cell] += config.strength * v_dist[ch];
      }
  }

  // (4) white noise everywhere
  if (config.noise > 0.0)
    for (double& x : feat) x += config.noise * rng.normal();

  Instance inst;
  inst.features = Tensor({c, h, w}, std::move(feat));
  inst.label = label;
  double half = static_cast<double>(p) / 2.0;
  inst.patch_center = {static_cast<double>(ty) + half, static_cast<double>(tx) + half};
  inst.patch_box = {inst.patch_center[0], inst.patch_center[1],
                    static_cast<double>(p), static_cast<double>(p)};
  return inst;
}

Instance gen_instance(Xoshiro256& rng, const TaskConfig& config) {
  config.validate();
  std::uint32_t label = static_cast<std::uint32_t>(rng.below(config.classes));
  return gen_instance_labeled(rng, config, label);
}

Dataset gen_dataset(std::uint64_t seed, std::size_t n, const TaskConfig& config) {
  config.validate();
  if (n < 1) throw std::invalid_argument("gen_dataset: n must be >= 1");

  SplitMix64 sm(seed);
  std::uint64_t shuffle_seed = sm.next();
  std::vector<std::uint64_t> sub_seeds(n);
  for (auto& s : sub_seeds) s = sm.next();

  // round-robin labels, then a seeded Fisher-Yates shuffle
  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = static_cast<std::uint32_t>(i % config.classes);
  Xoshiro256 shuffle_rng(shuffle_seed);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = shuffle_rng.below(i);
    std::swap(labels[i - 1], labels[j]);
  }

  Dataset ds;
  ds.config = config;
  ds.seed = seed;
  ds.instances.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Xoshiro256 rng(sub_seeds[i]);
    ds.instances.push_back(gen_instance_labeled(rng, config, labels[i]));
  }
  return ds;
}

std::array<double, 4> encode_box_target(const Instance& instance, const TaskConfig& config) {
  double extent = static_cast<double>(config.height);
  double bh = instance.patch_box[2], bw = instance.patch_box[3];
  if (bh <= 0.0 || bw <= 0.0) throw std::invalid_argument("encode_box_target: degenerate box");
  return {(instance.patch_box[0] - extent / 2.0) / extent,
          (instance.patch_box[1] - extent / 2.0) / extent,
          std::log(bh / extent), std::log(bw / extent)};
}

}  // namespace lga

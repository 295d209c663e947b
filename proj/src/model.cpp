#include "lga/model.hpp"

#include <cmath>
#include <stdexcept>

#include "lga/rng.hpp"

namespace lga {

void LgaConfig::validate() const {
  if (channels == 0 || classes == 0 || masks == 0 || hidden == 0 || down_channels == 0)
    throw std::invalid_argument("LgaConfig: extents must be positive");
  if (height != width)
    throw std::invalid_argument("LgaConfig: square grid assumed");
  if (s_ratio != static_cast<double>(height))
    throw std::invalid_argument("LgaConfig: s_ratio must equal the grid extent");
  if (lambda_reg < 0.0 || lambda_lga < 0.0)
    throw std::invalid_argument("LgaConfig: loss weights must be non-negative");
}

const std::vector<std::string>& LgaModel::weight_names() {
  static const std::vector<std::string> names = {
      "fd_w", "fd_b", "fmu_w", "fmu_b", "fsig_w", "fsig_b",
      "m1_w", "m1_b", "cls_w", "cls_b", "box_w", "box_b", "aux_w", "aux_b"};
  return names;
}

bool LgaModel::is_mask_weight(const std::string& name) {
  return name == "fd_w" || name == "fd_b" || name == "fmu_w" || name == "fmu_b" ||
         name == "fsig_w" || name == "fsig_b";
}

Tensor& LgaModel::weight(const std::string& name) {
  Tensor* found = nullptr;
  for_each_weight([&](const char* n, Tensor& t) {
    if (name == n) found = &t;
  });
  if (!found) throw std::invalid_argument("LgaModel: no weight named " + name);
  return *found;
}

namespace {

Tensor xavier(Xoshiro256& rng, std::size_t out, std::size_t in) {
  double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(out * in);
  for (double& v : w) v = rng.uniform(-a, a);
  return Tensor({out, in}, std::move(w));
}

}  // namespace

LgaModel init_model(const LgaConfig& config, std::uint64_t seed) {
  config.validate();
  Xoshiro256 rng(seed);
  std::size_t hw = config.cells();
  LgaModel m;
  m.config = config;
  m.fd_w = xavier(rng, config.down_channels, config.channels);
  m.fd_b = Tensor::zeros({config.down_channels});
  m.fmu_w = Tensor::zeros({2 * config.masks, config.down_channels * hw});
  m.fmu_b = Tensor::zeros({2 * config.masks});
  m.fsig_w = Tensor::zeros({config.masks, config.down_channels * hw});
  m.fsig_b = Tensor::zeros({config.masks});
  m.m1_w = xavier(rng, config.hidden, config.channels * hw);
  m.m1_b = Tensor::zeros({config.hidden});
  m.cls_w = xavier(rng, config.classes, config.hidden);
  m.cls_b = Tensor::zeros({config.classes});
  m.box_w = xavier(rng, 4, config.hidden);
  m.box_b = Tensor::zeros({4});
  m.aux_w = xavier(rng, config.classes, config.channels * hw);
  m.aux_b = Tensor::zeros({config.classes});
  return m;
}

NodeId extract_scalar(Tape& tape, NodeId vec, std::size_t index) {
  const Tensor& v = tape.value(vec);
  if (index >= v.size()) throw std::invalid_argument("extract_scalar: index out of range");
  std::vector<double> oh(v.size(), 0.0);
  oh[index] = 1.0;
  NodeId onehot = tape.leaf(Tensor(v.shape(), std::move(oh)));
  return tape.sum(tape.mul(vec, onehot));
}

NodeId render_mask(Tape& tape, NodeId mu_y, NodeId mu_x, NodeId sigma,
                   std::size_t height, std::size_t width) {
  if (tape.value(sigma).item() < 1.0)
    throw std::invalid_argument("render_mask: sigma < 1 violates the prediction contract");
  std::size_t hw = height * width;
  std::vector<double> cy(hw), cx(hw);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      cy[i * width + j] = static_cast<double>(i) + 0.5;
      cx[i * width + j] = static_cast<double>(j) + 0.5;
    }
  NodeId cyl = tape.leaf(Tensor({hw}, std::move(cy)));
  NodeId cxl = tape.leaf(Tensor({hw}, std::move(cx)));
  NodeId dy = tape.sub(cyl, mu_y);
  NodeId dx = tape.sub(cxl, mu_x);
  NodeId d2 = tape.add(tape.square(dy), tape.square(dx));
  NodeId denom = tape.scale(tape.square(sigma), 2.0);
  NodeId m = tape.exp(tape.div(tape.neg(d2), denom));
  return tape.reshape(m, {height, width});
}

NodeId combine_masks(Tape& tape, const std::vector<NodeId>& masks) {
  if (masks.empty()) throw std::invalid_argument("combine_masks: empty input list");
  NodeId acc = masks[0];
  for (std::size_t g = 1; g < masks.size(); ++g) acc = tape.maximum(acc, masks[g]);
  return acc;
}

NodeId apply_mask(Tape& tape, NodeId x, NodeId mask) {
  const auto& xs = tape.value(x).shape();
  const auto& ms = tape.value(mask).shape();
  if (xs.size() != 3 || ms.size() != 2 || xs[1] != ms[0] || xs[2] != ms[1])
    throw std::invalid_argument("apply_mask: spatial shapes do not match");
  return tape.mul(x, mask);
}

NodeId fuse(Tape& tape, NodeId x, NodeId masked) {
  if (!tape.value(x).same_shape(tape.value(masked)))
    throw std::invalid_argument("fuse: shape mismatch");
  return tape.add(x, masked);
}

namespace {

struct Leaves {
  std::vector<std::pair<std::string, NodeId>> all;
  NodeId get(const std::string& name) const {
    for (const auto& [n, id] : all)
      if (n == name) return id;
    throw std::invalid_argument("no weight leaf " + name);
  }
};

struct LeafOverride {
  std::string name;
  NodeId node;
};

Leaves make_leaves(Tape& tape, const LgaModel& model, bool requires_grad, bool mask_path,
                   const LeafOverride* override_leaf = nullptr) {
  Leaves leaves;
  model.for_each_weight([&](const char* name, const Tensor& t) {
    if (!mask_path && LgaModel::is_mask_weight(name)) return;
    if (override_leaf && override_leaf->name == name) {
      leaves.all.emplace_back(name, override_leaf->node);
      return;
    }
    leaves.all.emplace_back(name, tape.leaf(t, requires_grad));
  });
  return leaves;
}

// Linear layer on a column vector: out = W @ v + b, result shape [out].
NodeId linear_vec(Tape& tape, NodeId w, NodeId b, NodeId v, std::size_t out) {
  return tape.add(tape.reshape(tape.matmul(w, v), {out}), b);
}

ParamNodes predict_params_impl(Tape& tape, const LgaConfig& cfg, const Leaves& lv, NodeId x) {
  const auto& xs = tape.value(x).shape();
  if (xs.size() != 3 || xs[0] != cfg.channels || xs[1] != cfg.height || xs[2] != cfg.width)
    throw std::invalid_argument("predict_params: input shape " + shape_str(xs) +
                                " does not match config");
  std::size_t hw = cfg.cells();
  NodeId x2 = tape.reshape(x, {cfg.channels, hw});
  NodeId pre = tape.add(tape.matmul(lv.get("fd_w"), x2),
                        tape.reshape(lv.get("fd_b"), {cfg.down_channels, 1}));
  NodeId h = tape.relu(pre);
  NodeId flat = tape.reshape(h, {cfg.down_channels * hw, 1});
  NodeId z_mu = linear_vec(tape, lv.get("fmu_w"), lv.get("fmu_b"), flat, 2 * cfg.masks);
  NodeId z_sg = linear_vec(tape, lv.get("fsig_w"), lv.get("fsig_b"), flat, cfg.masks);
  // mu = (S/2)(tanh(z)+1) keeps every component in [0, S]; sigma = relu(z)+1 >= 1.
  NodeId mu = tape.scale(tape.add_const(tape.tanh(z_mu), 1.0), cfg.s_ratio / 2.0);
  NodeId sigma = tape.add_const(tape.relu(z_sg), 1.0);
  return ParamNodes{mu, sigma};
}

}  // namespace

ParamNodes predict_params(Tape& tape, const LgaModel& model, NodeId x) {
  Leaves lv = make_leaves(tape, model, false, true);
  return predict_params_impl(tape, model.config, lv, x);
}

GaussianParams read_params(const Tape& tape, const ParamNodes& nodes, std::size_t k) {
  const Tensor& mu = tape.value(nodes.mu);
  const Tensor& sg = tape.value(nodes.sigma);
  GaussianParams p;
  for (std::size_t g = 0; g < k; ++g) {
    p.centers.push_back({mu[2 * g], mu[2 * g + 1]});
    p.scales.push_back(sg[g]);
  }
  return p;
}

namespace {

ForwardGraph forward_impl(Tape& tape, const LgaModel& model, const Tensor& x,
                          bool lga_enabled, const Leaves& lv) {
  const LgaConfig& cfg = model.config;
  cfg.validate();
  ForwardGraph g;
  g.lga = lga_enabled;
  g.weight_leaves = lv.all;
  g.x = tape.leaf(x);

  if (lga_enabled) {
    g.params = predict_params_impl(tape, cfg, lv, g.x);
    std::vector<NodeId> masks;
    for (std::size_t i = 0; i < cfg.masks; ++i) {
      NodeId my = extract_scalar(tape, g.params.mu, 2 * i);
      NodeId mx = extract_scalar(tape, g.params.mu, 2 * i + 1);
      NodeId sg = extract_scalar(tape, g.params.sigma, i);
      masks.push_back(render_mask(tape, my, mx, sg, cfg.height, cfg.width));
    }
    g.mask = combine_masks(tape, masks);
    g.masked = apply_mask(tape, g.x, g.mask);
    g.fused = fuse(tape, g.x, g.masked);
  } else {
    g.masked = g.x;
    g.fused = g.x;
  }

  std::size_t flat_n = cfg.channels * cfg.cells();
  NodeId flatf = tape.reshape(g.fused, {flat_n, 1});
  NodeId hidden = tape.relu(tape.add(tape.matmul(lv.get("m1_w"), flatf),
                                     tape.reshape(lv.get("m1_b"), {cfg.hidden, 1})));
  g.main_logits = tape.add(tape.reshape(tape.matmul(lv.get("cls_w"), hidden), {cfg.classes}),
                           lv.get("cls_b"));
  g.box = tape.add(tape.reshape(tape.matmul(lv.get("box_w"), hidden), {4}), lv.get("box_b"));
  NodeId flatm = tape.reshape(g.masked, {flat_n, 1});
  g.aux_logits = tape.add(tape.reshape(tape.matmul(lv.get("aux_w"), flatm), {cfg.classes}),
                          lv.get("aux_b"));
  return g;
}

}  // namespace

ForwardGraph forward(Tape& tape, const LgaModel& model, const Tensor& x,
                     bool lga_enabled, bool weights_require_grad) {
  Leaves lv = make_leaves(tape, model, weights_require_grad, lga_enabled);
  return forward_impl(tape, model, x, lga_enabled, lv);
}

ForwardGraph forward_with_weight_leaf(Tape& tape, const LgaModel& model, const Tensor& x,
                                      bool lga_enabled, const std::string& weight_name,
                                      NodeId weight_node) {
  LgaModel probe = model;  // tensors share buffers; this is a cheap shape lookup
  if (!tape.value(weight_node).same_shape(probe.weight(weight_name)))
    throw std::invalid_argument("forward_with_weight_leaf: shape mismatch for " + weight_name);
  LeafOverride ov{weight_name, weight_node};
  Leaves lv = make_leaves(tape, model, false, lga_enabled, &ov);
  return forward_impl(tape, model, x, lga_enabled, lv);
}

LossNodes total_loss(Tape& tape, const ForwardGraph& g, int label,
                     const Tensor& box_target, const LgaConfig& config) {
  if (label < 0 || label >= static_cast<int>(config.classes))
    throw std::invalid_argument("total_loss: label out of range");
  LossNodes l;
  l.cls = softmax_cross_entropy(tape, g.main_logits, label);
  l.reg = smooth_l1(tape, g.box, box_target, 1.0);
  l.lga = softmax_cross_entropy(tape, g.aux_logits, label);
  l.total = tape.add(l.cls, tape.add(tape.scale(l.reg, config.lambda_reg),
                                     tape.scale(l.lga, config.lambda_lga)));
  return l;
}

}  // namespace lga

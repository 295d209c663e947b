#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lga/tape.hpp"

namespace lga {

struct LgaConfig {
  std::size_t channels = 32;        // C (paper value 256 selectable)
  std::size_t height = 7;
  std::size_t width = 7;
  std::size_t masks = 4;            // k
  double s_ratio = 7.0;             // equals the spatial extent of the grid
  std::size_t down_channels = 8;    // C_d, default C/4
  std::size_t hidden = 128;
  std::size_t classes = 4;
  double lambda_reg = 1.0;
  double lambda_lga = 1.0;

  void validate() const;
  std::size_t cells() const { return height * width; }
};

// Concrete per-RoI attention parameters read off a tape.
struct GaussianParams {
  std::vector<std::array<double, 2>> centers;  // (mu_y, mu_x) per mask, grid units
  std::vector<double> scales;                  // sigma per mask, >= 1
};

// All learnable weights. Linear layers are stored [out, in]; biases [out].
struct LgaModel {
  LgaConfig config;
  Tensor fd_w, fd_b;      // per-cell downsample C -> C_d
  Tensor fmu_w, fmu_b;    // C_d*HW -> 2k
  Tensor fsig_w, fsig_b;  // C_d*HW -> k
  Tensor m1_w, m1_b;      // C*HW -> hidden (shared trunk of main cls + box)
  Tensor cls_w, cls_b;    // hidden -> classes
  Tensor box_w, box_b;    // hidden -> 4
  Tensor aux_w, aux_b;    // C*HW -> classes, reads masked features only

  template <class F>
  void for_each_weight(F f) {
    f("fd_w", fd_w); f("fd_b", fd_b);
    f("fmu_w", fmu_w); f("fmu_b", fmu_b);
    f("fsig_w", fsig_w); f("fsig_b", fsig_b);
    f("m1_w", m1_w); f("m1_b", m1_b);
    f("cls_w", cls_w); f("cls_b", cls_b);
    f("box_w", box_w); f("box_b", box_b);
    f("aux_w", aux_w); f("aux_b", aux_b);
  }
  template <class F>
  void for_each_weight(F f) const {
    const_cast<LgaModel*>(this)->for_each_weight(
        [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  static const std::vector<std::string>& weight_names();
  static bool is_mask_weight(const std::string& name);
  Tensor& weight(const std::string& name);
};

// Generic weights uniform in [-a, a] with a = sqrt(6/(fan_in+fan_out)); the
// mu/sigma heads start at exactly zero so the initial prediction is the grid
// center with sigma = 1. Deterministic in seed.
LgaModel init_model(const LgaConfig& config, std::uint64_t seed);

struct ParamNodes {
  NodeId mu;     // [2k], interleaved (mu_y_g, mu_x_g)
  NodeId sigma;  // [k]
};

// One forward pass recorded on a tape. With lga disabled the mask path is not
// built at all: masked = fused = x.
struct ForwardGraph {
  NodeId x;
  ParamNodes params{};
  NodeId mask = 0;    // [H,W]
  NodeId masked;      // [C,H,W]
  NodeId fused;       // [C,H,W]
  NodeId main_logits; // [classes]
  NodeId aux_logits;  // [classes]
  NodeId box;         // [4]
  bool lga = true;
  std::vector<std::pair<std::string, NodeId>> weight_leaves;
};

ForwardGraph forward(Tape& tape, const LgaModel& model, const Tensor& x,
                     bool lga_enabled = true, bool weights_require_grad = false);

// Same forward pass, but one named weight comes from an existing tape node.
// Lets the finite-difference checker differentiate the loss with respect to a
// single weight group.
ForwardGraph forward_with_weight_leaf(Tape& tape, const LgaModel& model, const Tensor& x,
                                      bool lga_enabled, const std::string& weight_name,
                                      NodeId weight_node);

// Standalone Eq.-(1) parameter prediction (fresh non-grad weight leaves).
ParamNodes predict_params(Tape& tape, const LgaModel& model, NodeId x);

GaussianParams read_params(const Tape& tape, const ParamNodes& nodes, std::size_t k);

// Unnormalized isotropic Gaussian over cell centers (i+0.5, j+0.5).
NodeId render_mask(Tape& tape, NodeId mu_y, NodeId mu_x, NodeId sigma,
                   std::size_t height, std::size_t width);

// Elementwise maximum; ties route gradient to the lowest-index mask.
NodeId combine_masks(Tape& tape, const std::vector<NodeId>& masks);

NodeId apply_mask(Tape& tape, NodeId x, NodeId mask);
NodeId fuse(Tape& tape, NodeId x, NodeId masked);

// vec[index] as a scalar node (one-hot inner product, differentiable).
NodeId extract_scalar(Tape& tape, NodeId vec, std::size_t index);

struct LossNodes {
  NodeId total;
  NodeId cls;  // CE on main logits
  NodeId reg;  // smooth-L1 on the box prediction
  NodeId lga;  // CE on aux logits
};

// L = CE(main) + lambda_reg * smoothL1(box) + lambda_lga * CE(aux), beta = 1.
LossNodes total_loss(Tape& tape, const ForwardGraph& g, int label,
                     const Tensor& box_target, const LgaConfig& config);

}  // namespace lga

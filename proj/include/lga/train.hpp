#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lga/data.hpp"
#include "lga/model.hpp"

namespace lga {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  bool lga_enabled = true;
  // < 0 means "inherit from the model config"
  double lambda_reg = -1.0;
  double lambda_lga = -1.0;

  void validate() const;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m, v;
  std::uint64_t t = 0;
};

using GradBuffers = std::map<std::string, std::vector<double>>;

// Standard Adam with bias correction. A non-finite gradient is reported to
// stderr and the whole step is skipped.
void adam_step(LgaModel& model, const GradBuffers& grads, AdamState& state,
               const TrainConfig& config);

struct Metrics {
  double acc_main = 0.0;
  double acc_aux = 0.0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  double loss_lga = 0.0;
  double mask_dist = 0.0;  // mean over instances of min_k |mu_g - patch_center|
  double box_l1 = 0.0;     // mean absolute box-target component error
};

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;
  Metrics metrics;
};

// `epoch,split,loss_total,loss_cls,loss_reg,loss_lga,acc_main,acc_aux,mask_dist,box_l1`
std::string metrics_csv(const std::vector<MetricsRow>& rows);

Metrics evaluate(const LgaModel& model, const Dataset& data, bool lga_enabled = true);

struct TrainResult {
  LgaModel model;
  std::vector<MetricsRow> log;  // epoch 0 = pre-training evaluation
};

// Seeded mini-batch loop. lga_enabled=false trains the baseline: the mask
// path is not built (fused = x) and the aux loss weight is forced to zero.
TrainResult train(const LgaModel& model, const Dataset& data, const TrainConfig& config,
                  const Dataset* val = nullptr);

struct AblationRow {
  std::uint64_t seed = 0;
  std::string variant;  // "lga" or "baseline"
  Metrics val;
  double const_center_dist = 0.0;  // zero-init constant-mu distance on this val set
};

struct AblationReport {
  std::vector<AblationRow> rows;
  double mean_acc_diff = 0.0;       // mean over seeds of (lga - baseline) val accuracy
  double mean_aux_diff = 0.0;
  double mean_box_diff = 0.0;
  double mean_lga_mask_dist = 0.0;
  double mean_const_center_dist = 0.0;
  std::string to_csv() const;
};

// Paired LGA-vs-baseline runs from identical initial weights and data.
AblationReport ablation_compare(const std::vector<std::uint64_t>& seeds,
                                const TaskConfig& task, const LgaConfig& lga_config,
                                const TrainConfig& train_config,
                                std::size_t n_train, std::size_t n_val);

}  // namespace lga

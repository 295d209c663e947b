#include "lga/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#include "lga/errors.hpp"
#include "lga/io.hpp"
#include "lga/rng.hpp"

namespace lga {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("TrainConfig: epochs and batch_size must be positive");
  if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be positive");
}

void adam_step(LgaModel& model, const GradBuffers& grads, AdamState& state,
               const TrainConfig& config) {
  for (const auto& [name, g] : grads) {
    for (double v : g)
      if (!std::isfinite(v)) {
        std::cerr << "warning: non-finite gradient for " << name << ", step skipped\n";
        return;
      }
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    Tensor& w = model.weight(name);
    if (g.size() != w.size())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    std::vector<double> next(w.vec());
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      next[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
    }
    w = Tensor(w.shape(), std::move(next));
  }
}

namespace {

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

double min_center_dist(const GaussianParams& p, const std::array<double, 2>& center) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : p.centers)
    best = std::min(best, std::hypot(c[0] - center[0], c[1] - center[1]));
  return best;
}

struct InstanceStats {
  Metrics sums;  // unnormalized accumulators
  std::size_t count = 0;

  void add(const Tape& tape, const ForwardGraph& g, const LossNodes& l,
           const Instance& inst, const Tensor& target, const LgaModel& model) {
    sums.loss_total += tape.value(l.total).item();
    sums.loss_cls += tape.value(l.cls).item();
    sums.loss_reg += tape.value(l.reg).item();
    sums.loss_lga += tape.value(l.lga).item();
    sums.acc_main += argmax(tape.value(g.main_logits)) == inst.label ? 1.0 : 0.0;
    sums.acc_aux += argmax(tape.value(g.aux_logits)) == inst.label ? 1.0 : 0.0;
    const Tensor& box = tape.value(g.box);
    double l1 = 0.0;
    for (std::size_t i = 0; i < 4; ++i) l1 += std::abs(box[i] - target[i]);
    sums.box_l1 += l1 / 4.0;
    if (g.lga) {
      sums.mask_dist += min_center_dist(
          read_params(tape, g.params, model.config.masks), inst.patch_center);
    } else {
      // mask weights are untouched by the baseline; read them on a side tape
      Tape side;
      NodeId x = side.leaf(inst.features);
      ParamNodes p = predict_params(side, model, x);
      sums.mask_dist += min_center_dist(
          read_params(side, p, model.config.masks), inst.patch_center);
    }
    count += 1;
  }

  Metrics mean() const {
    Metrics m = sums;
    double n = static_cast<double>(count);
    m.acc_main /= n; m.acc_aux /= n;
    m.loss_total /= n; m.loss_cls /= n; m.loss_reg /= n; m.loss_lga /= n;
    m.mask_dist /= n; m.box_l1 /= n;
    return m;
  }
};

LgaConfig effective_config(const LgaModel& model, const TrainConfig& tc) {
  LgaConfig cfg = model.config;
  if (tc.lambda_reg >= 0.0) cfg.lambda_reg = tc.lambda_reg;
  if (tc.lambda_lga >= 0.0) cfg.lambda_lga = tc.lambda_lga;
  if (!tc.lga_enabled) cfg.lambda_lga = 0.0;
  return cfg;
}

void check_compat(const LgaModel& model, const Dataset& data) {
  const LgaConfig& m = model.config;
  const TaskConfig& d = data.config;
  if (m.channels != d.channels || m.height != d.height || m.width != d.width ||
      m.classes != d.classes)
    throw ConfigError("model config does not match dataset config");
}

}  // namespace

Metrics evaluate(const LgaModel& model, const Dataset& data, bool lga_enabled) {
  check_compat(model, data);
  if (data.instances.empty()) throw ConfigError("evaluate: empty dataset");
  LgaConfig cfg = model.config;
  if (!lga_enabled) cfg.lambda_lga = 0.0;
  InstanceStats stats;
  for (const Instance& inst : data.instances) {
    Tape tape;
    ForwardGraph g = forward(tape, model, inst.features, lga_enabled, false);
    auto t = encode_box_target(inst, data.config);
    Tensor target({4}, {t[0], t[1], t[2], t[3]});
    LossNodes l = total_loss(tape, g, static_cast<int>(inst.label), target, cfg);
    stats.add(tape, g, l, inst, target, model);
  }
  return stats.mean();
}

TrainResult train(const LgaModel& model, const Dataset& data, const TrainConfig& config,
                  const Dataset* val) {
  config.validate();
  check_compat(model, data);
  if (val) check_compat(model, *val);

  TrainResult result;
  result.model = model;
  result.model.config = effective_config(model, config);
  LgaModel& net = result.model;

  auto log_epoch = [&](std::size_t epoch, const Metrics& train_metrics) {
    result.log.push_back({epoch, "train", train_metrics});
    if (val) result.log.push_back({epoch, "val", evaluate(net, *val, config.lga_enabled)});
  };
  log_epoch(0, evaluate(net, data, config.lga_enabled));

  AdamState adam;
  SplitMix64 shuffle_seeds(SplitMix64(config.seed).next());
  std::size_t n = data.instances.size();
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Xoshiro256 rng(shuffle_seeds.next());
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);

    InstanceStats epoch_stats;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      std::size_t end = std::min(n, start + config.batch_size);
      double inv = 1.0 / static_cast<double>(end - start);
      GradBuffers batch_grads;
      for (std::size_t b = start; b < end; ++b) {
        const Instance& inst = data.instances[order[b]];
        Tape tape;
        tape.reserve(160);
        ForwardGraph g = forward(tape, net, inst.features, config.lga_enabled, true);
        auto t = encode_box_target(inst, data.config);
        Tensor target({4}, {t[0], t[1], t[2], t[3]});
        LossNodes l = total_loss(tape, g, static_cast<int>(inst.label), target, net.config);
        epoch_stats.add(tape, g, l, inst, target, net);
        std::vector<std::pair<NodeId, double*>> sinks;
        sinks.reserve(g.weight_leaves.size());
        for (const auto& [name, leaf] : g.weight_leaves) {
          auto& acc = batch_grads[name];
          if (acc.empty()) acc.assign(tape.value(leaf).size(), 0.0);
          sinks.emplace_back(leaf, acc.data());
        }
        tape.backward_accumulate(l.total, sinks, inv);
      }
      adam_step(net, batch_grads, adam, config);
    }
    log_epoch(epoch, epoch_stats.mean());
  }
  return result;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "epoch,split,loss_total,loss_cls,loss_reg,loss_lga,acc_main,acc_aux,mask_dist,box_l1\n";
  for (const MetricsRow& r : rows) {
    const Metrics& m = r.metrics;
    out << r.epoch << ',' << r.split << ',' << format_double(m.loss_total) << ','
        << format_double(m.loss_cls) << ',' << format_double(m.loss_reg) << ','
        << format_double(m.loss_lga) << ',' << format_double(m.acc_main) << ','
        << format_double(m.acc_aux) << ',' << format_double(m.mask_dist) << ','
        << format_double(m.box_l1) << '\n';
  }
  return out.str();
}

AblationReport ablation_compare(const std::vector<std::uint64_t>& seeds,
                                const TaskConfig& task, const LgaConfig& lga_config,
                                const TrainConfig& train_config,
                                std::size_t n_train, std::size_t n_val) {
  if (seeds.size() < 2) throw ConfigError("ablation_compare: need at least 2 seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("ablation_compare: duplicate seeds");

  AblationReport report;
  for (std::uint64_t seed : seeds) {
    SplitMix64 sm(seed);
    Dataset train_ds = gen_dataset(sm.next(), n_train, task);
    Dataset val_ds = gen_dataset(sm.next(), n_val, task);
    LgaModel init = init_model(lga_config, sm.next());

    TrainConfig tc = train_config;
    tc.seed = sm.next();

    tc.lga_enabled = true;
    TrainResult lga_run = train(init, train_ds, tc);
    Metrics lga_val = evaluate(lga_run.model, val_ds, true);

    tc.lga_enabled = false;
    TrainResult base_run = train(init, train_ds, tc);
    Metrics base_val = evaluate(base_run.model, val_ds, false);

    double const_dist = 0.0;
    double cy = lga_config.s_ratio / 2.0;
    for (const Instance& inst : val_ds.instances)
      const_dist += std::hypot(cy - inst.patch_center[0], cy - inst.patch_center[1]);
    const_dist /= static_cast<double>(val_ds.instances.size());

    report.rows.push_back({seed, "lga", lga_val, const_dist});
    report.rows.push_back({seed, "baseline", base_val, const_dist});
    report.mean_acc_diff += lga_val.acc_main - base_val.acc_main;
    report.mean_aux_diff += lga_val.acc_aux - base_val.acc_aux;
    report.mean_box_diff += lga_val.box_l1 - base_val.box_l1;
    report.mean_lga_mask_dist += lga_val.mask_dist;
    report.mean_const_center_dist += const_dist;
  }
  double ns = static_cast<double>(seeds.size());
  report.mean_acc_diff /= ns;
  report.mean_aux_diff /= ns;
  report.mean_box_diff /= ns;
  report.mean_lga_mask_dist /= ns;
  report.mean_const_center_dist /= ns;
  return report;
}

std::string AblationReport::to_csv() const {
  std::ostringstream out;
  out << "seed,variant,acc_main,acc_aux,mask_dist,box_l1,const_center_dist\n";
  for (const AblationRow& r : rows) {
    out << r.seed << ',' << r.variant << ',' << format_double(r.val.acc_main) << ','
        << format_double(r.val.acc_aux) << ',' << format_double(r.val.mask_dist) << ','
        << format_double(r.val.box_l1) << ',' << format_double(r.const_center_dist) << '\n';
  }
  // summary semantics: acc/box columns hold mean (lga - baseline) differences,
  // mask_dist holds the mean LGA distance.
  out << "summary,lga_minus_baseline," << format_double(mean_acc_diff) << ','
      << format_double(mean_aux_diff) << ',' << format_double(mean_lga_mask_dist) << ','
      << format_double(mean_box_diff) << ',' << format_double(mean_const_center_dist) << '\n';
  return out.str();
}

}  // namespace lga

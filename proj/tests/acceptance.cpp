// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
// Heavier end-to-end checks (gradients, overfit, ablation) go through the CLI
// binary; analytic properties run in-process.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lga/data.hpp"
#include "lga/io.hpp"
#include "lga/model.hpp"
#include "lga/rng.hpp"
#include "lga/train.hpp"

using namespace lga;
namespace fs = std::filesystem;

namespace {

const std::string kCli = LGA_CLI_PATH;
const fs::path kDir = "acceptance_artifacts";

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

int run_cli(const std::string& args, const std::string& log_name) {
  std::string cmd = "\"" + kCli + "\" " + args + " > " + (kDir / log_name).string() + " 2>&1";
  int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<unreadable:" + path + ">";
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string p(const std::string& name) { return (kDir / name).string(); }

bool same_file(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

// ---- criterion 1: gradient suite through the CLI ------------------------------

bool criterion_gradients(std::string& detail) {
  double t0 = now_s();
  int code = run_cli("gradcheck --tolerance 1e-6", "gradcheck.log");
  double dt = now_s() - t0;
  std::ostringstream d;
  d << "exit=" << code << " runtime=" << dt << "s (limit 60s)";
  detail = d.str();
  return code == 0 && dt < 60.0;
}

// ---- criterion 2: parameter ranges over 1000 random models --------------------

bool criterion_ranges(std::string& detail) {
  LgaConfig cfg;  // defaults: C=32, k=4, classes=4
  Xoshiro256 rng(20240501);
  std::size_t violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    LgaModel m = init_model(cfg, rng.next_u64());
    auto randomize = [&](Tensor& w, double a) {
      std::vector<double> v(w.size());
      for (double& x : v) x = rng.uniform(-a, a);
      w = Tensor(w.shape(), std::move(v));
    };
    randomize(m.fmu_w, 3.0);
    randomize(m.fmu_b, 6.0);
    randomize(m.fsig_w, 3.0);
    randomize(m.fsig_b, 6.0);
    std::vector<double> x(cfg.channels * cfg.cells());
    for (double& v : x) v = rng.normal();
    Tape t;
    NodeId xn = t.leaf(Tensor({cfg.channels, cfg.height, cfg.width}, std::move(x)));
    GaussianParams gp = read_params(t, predict_params(t, m, xn), cfg.masks);
    for (std::size_t g = 0; g < cfg.masks; ++g) {
      if (gp.centers[g][0] < 0.0 || gp.centers[g][0] > 7.0) ++violations;
      if (gp.centers[g][1] < 0.0 || gp.centers[g][1] > 7.0) ++violations;
      if (gp.scales[g] < 1.0) ++violations;
    }
  }
  detail = "violations=" + std::to_string(violations) + " over 1000 models";
  return violations == 0;
}

// ---- criterion 3: mask closed forms, argmax, monotone decay -------------------

Tensor render(double my, double mx, double sg) {
  Tape t;
  NodeId m = render_mask(t, t.leaf(Tensor::scalar(my)), t.leaf(Tensor::scalar(mx)),
                         t.leaf(Tensor::scalar(sg)), 7, 7);
  return t.value(m);
}

bool criterion_mask(std::string& detail) {
  double worst = 0.0;
  Tensor center = render(3.5, 3.5, 1.0);
  worst = std::max(worst, std::abs(center[3 * 7 + 3] - 1.0));
  worst = std::max(worst, std::abs(center[3 * 7 + 4] - 0.6065306597126334));

  std::size_t property_failures = 0;
  for (double my = 0.0; my <= 7.0 + 1e-9; my += 0.25) {
    for (double mx = 0.0; mx <= 7.0 + 1e-9; mx += 0.25) {
      Tensor m = render(my, mx, 1.25);
      std::vector<double> d2(49);
      std::size_t arg = 0, want = 0;
      double best = 1e300;
      for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) {
          double dy = static_cast<double>(i) + 0.5 - my;
          double dx = static_cast<double>(j) + 0.5 - mx;
          std::size_t c = i * 7 + j;
          d2[c] = dy * dy + dx * dx;
          if (m[c] > m[arg]) arg = c;
          if (d2[c] < best) {
            best = d2[c];
            want = c;
          }
        }
      if (arg != want) ++property_failures;
      for (std::size_t a = 0; a < 49; ++a)
        for (std::size_t b = 0; b < 49; ++b)
          if (d2[a] < d2[b] && !(m[a] > m[b])) ++property_failures;
    }
  }
  std::ostringstream d;
  d << "max_spot_error=" << worst << " (limit 1e-12), sweep_failures=" << property_failures;
  detail = d.str();
  return worst <= 1e-12 && property_failures == 0;
}

// ---- criterion 4: fusion identity ---------------------------------------------

bool criterion_fusion(std::string& detail) {
  Xoshiro256 rng(4242);
  std::size_t failures = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> v(32 * 49);
    for (double& x : v) x = rng.normal() * rng.uniform(0.1, 10.0);
    Tensor x({32, 7, 7}, std::move(v));
    Tape t;
    NodeId xn = t.leaf(x);
    NodeId masked = apply_mask(t, xn, t.leaf(Tensor::zeros({7, 7})));
    NodeId fused = fuse(t, xn, masked);
    if (std::memcmp(t.value(fused).data(), x.data(), x.size() * sizeof(double)) != 0)
      ++failures;
  }
  detail = "bit-exact failures=" + std::to_string(failures) + " over 100 random inputs";
  return failures == 0;
}

// ---- criterion 5: overfit sanity ----------------------------------------------

bool criterion_overfit(std::string& detail) {
  double t0 = now_s();
  TaskConfig task;  // defaults C=32, classes=4
  Dataset ds = gen_dataset(2024, 32, task);
  LgaConfig cfg;
  LgaModel init = init_model(cfg, 1);
  TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 32;
  tc.seed = 3;
  TrainResult r = train(init, ds, tc);
  double acc = evaluate(r.model, ds).acc_main;
  double dt = now_s() - t0;
  std::ostringstream d;
  d << "train_acc=" << acc << " (need >= 0.99) runtime=" << dt << "s (limit 120s)";
  detail = d.str();
  return acc >= 0.99 && dt < 120.0;
}

// ---- criterion 6: ablation direction + localization ---------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

// 1e5-sample Monte-Carlo estimate of the mask-localization distance when the
// k predicted centers are uniform over [0,7]^2, against the task's patch
// center distribution.
double uniform_mu_distance(std::size_t k, const TaskConfig& task) {
  Xoshiro256 mc(987654321);
  double half = static_cast<double>(task.patch) / 2.0;
  std::size_t positions = task.height - task.patch + 1;
  double total = 0.0;
  const std::size_t n = 100000;
  for (std::size_t s = 0; s < n; ++s) {
    double cy = static_cast<double>(mc.below(positions)) + half;
    double cx = static_cast<double>(mc.below(positions)) + half;
    double best = 1e300;
    for (std::size_t g = 0; g < k; ++g) {
      double dy = mc.uniform(0.0, 7.0) - cy;
      double dx = mc.uniform(0.0, 7.0) - cx;
      best = std::min(best, std::hypot(dy, dx));
    }
    total += best;
  }
  return total / static_cast<double>(n);
}

bool criterion_ablation(std::string& detail) {
  double t0 = now_s();
  int code = run_cli("compare --set epochs=30 --set n_train=2000 --set n_val=500"
                     " --seeds 1,2,3,4,5 --out " + p("ablation.csv"),
                     "compare.log");
  double dt = now_s() - t0;
  if (code != 0) {
    detail = "compare exited with " + std::to_string(code);
    return false;
  }
  std::istringstream in(slurp(p("ablation.csv")));
  std::string line, summary;
  while (std::getline(in, line))
    if (line.rfind("summary,", 0) == 0) summary = line;
  auto f = split_csv(summary);
  if (f.size() != 7) {
    detail = "malformed summary row: '" + summary + "'";
    return false;
  }
  double mean_acc_diff = std::strtod(f[2].c_str(), nullptr);
  double lga_mask_dist = std::strtod(f[4].c_str(), nullptr);
  double const_center_dist = std::strtod(f[6].c_str(), nullptr);
  TaskConfig task;
  double uniform_dist = uniform_mu_distance(4, task);

  std::ostringstream d;
  d << "mean_acc_diff=" << mean_acc_diff << " (need > 0), lga_mask_dist=" << lga_mask_dist
    << " vs const_center=" << const_center_dist << " and uniform_mu=" << uniform_dist
    << ", runtime=" << dt << "s (limit 900s)";
  detail = d.str();
  return mean_acc_diff > 0.0 && lga_mask_dist < const_center_dist &&
         lga_mask_dist < uniform_dist && dt < 900.0;
}

// ---- criterion 7: determinism and serialization -------------------------------

bool criterion_determinism(std::string& detail) {
  std::string fast = "--set channels=6 --set epochs=3 --set batch_size=8 --set hidden=16";
  std::vector<std::string> problems;

  for (int round = 1; round <= 2; ++round) {
    std::string sfx = round == 1 ? "_1" : "_2";
    if (run_cli("gen-data --set channels=6 --seed 7 --n 40 --out " + p("data" + sfx + ".lgaf"),
                "det_gen" + sfx + ".log") != 0)
      problems.push_back("gen-data failed");
    if (run_cli("train " + fast + " --set seed=9 --data " + p("data" + sfx + ".lgaf") +
                    " --out-model " + p("model" + sfx + ".lgam") + " --metrics " +
                    p("metrics" + sfx + ".csv"),
                "det_train" + sfx + ".log") != 0)
      problems.push_back("train failed");
    if (run_cli("dump-masks --model " + p("model" + sfx + ".lgam") + " --data " +
                    p("data" + sfx + ".lgaf") + " --index-range 0:5 --out-dir " +
                    p("masks" + sfx),
                "det_masks" + sfx + ".log") != 0)
      problems.push_back("dump-masks failed");
  }
  if (!same_file(p("data_1.lgaf"), p("data_2.lgaf"))) problems.push_back("dataset bytes differ");
  if (!same_file(p("model_1.lgam"), p("model_2.lgam"))) problems.push_back("model bytes differ");
  if (!same_file(p("metrics_1.csv"), p("metrics_2.csv"))) problems.push_back("metrics bytes differ");
  for (int i = 0; i < 5; ++i) {
    std::string f = "mask_" + std::to_string(i) + ".pgm";
    if (!same_file(p("masks_1/" + f), p("masks_2/" + f)))
      problems.push_back("heatmap bytes differ: " + f);
  }
  if (!same_file(p("masks_1/masks.csv"), p("masks_2/masks.csv")))
    problems.push_back("mask csv bytes differ");

  // save/load roundtrips are bit-exact
  Dataset ds = load_dataset(p("data_1.lgaf"));
  save_dataset(ds, p("data_resaved.lgaf"));
  if (!same_file(p("data_1.lgaf"), p("data_resaved.lgaf")))
    problems.push_back("dataset save/load roundtrip not bit-exact");
  SavedModel sm = load_model(p("model_1.lgam"));
  save_model(sm.model, sm.lga_enabled, p("model_resaved.lgam"));
  if (!same_file(p("model_1.lgam"), p("model_resaved.lgam")))
    problems.push_back("model save/load roundtrip not bit-exact");

  if (problems.empty()) {
    detail = "all rerun outputs byte-identical; roundtrips bit-exact";
    return true;
  }
  std::string joined;
  for (const std::string& s : problems) joined += (joined.empty() ? "" : "; ") + s;
  detail = joined;
  return false;
}

}  // namespace

int main() {
  fs::remove_all(kDir);
  fs::create_directories(kDir);

  struct Criterion {
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  std::vector<Criterion> criteria = {
      {"1 gradient suite (<= 1e-6, h=1e-5, < 60s)", criterion_gradients},
      {"2 mu in [0,7], sigma >= 1 over 1000 random models", criterion_ranges},
      {"3 mask closed forms + argmax/monotone-decay sweep", criterion_mask},
      {"4 fusion identity bit-exact on 100 random inputs", criterion_fusion},
      {"5 overfit 32 instances to >= 99% in 500 epochs", criterion_overfit},
      {"6 ablation: LGA beats baseline, masks localize", criterion_ablation},
      {"7 determinism and serialization byte-exactness", criterion_determinism},
  };

  int failures = 0;
  for (auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %s — %s\n", ok ? "PASS" : "FAIL", c.name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("%d/7 criteria passed\n", 7 - failures);
  return failures == 0 ? 0 : 1;
}

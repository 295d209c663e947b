#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "lga/config.hpp"
#include "lga/errors.hpp"
#include "lga/gradcheck_suite.hpp"
#include "lga/io.hpp"
#include "lga/train.hpp"

namespace {

using namespace lga;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--set", sets, "override a config key (key=value), repeatable");
  }

  RunConfig make() const {
    RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    for (const std::string& kv : sets) {
      std::size_t eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return rc;
  }
};

void check_data_compat(const RunConfig& rc, const Dataset& ds) {
  const TaskConfig& a = rc.task;
  const TaskConfig& b = ds.config;
  if (a.channels != b.channels || a.classes != b.classes || a.height != b.height ||
      a.width != b.width)
    throw ConfigError("dataset file does not match the configured task (channels/classes/grid)");
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("seeds: empty entry in '" + spec + "'");
    char* end = nullptr;
    std::uint64_t s = std::strtoull(item.c_str(), &end, 10);
    if (end != item.c_str() + item.size())
      throw ConfigError("seeds: expected an integer, got '" + item + "'");
    seeds.push_back(s);
  }
  if (seeds.size() < 2) throw ConfigError("seeds: need at least 2 comma-separated seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds: duplicate seeds");
  return seeds;
}

int cmd_gen_data(const CommonOpts& common, std::uint64_t seed, bool seed_given,
                 std::uint64_t n, bool n_given, const std::string& out) {
  RunConfig rc = common.make();
  rc.finalize();
  if (!seed_given) seed = rc.train.seed;
  if (!n_given) n = rc.n_train;
  if (n < 1) throw ConfigError("n: must be >= 1");
  Dataset ds = gen_dataset(seed, n, rc.task);
  save_dataset(ds, out);
  std::cout << "wrote " << out << ": n=" << n << " classes=" << rc.task.classes
            << " seed=" << seed << "\n";
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_path,
              const std::string& model_out, const std::string& metrics_out) {
  RunConfig rc = common.make();
  rc.finalize();
  Dataset ds = load_dataset(data_path);
  check_data_compat(rc, ds);
  LgaModel model = init_model(rc.lga, rc.train.seed);
  TrainResult result = train(model, ds, rc.train);
  save_model(result.model, rc.train.lga_enabled, model_out);
  write_text_atomic(metrics_out, metrics_csv(result.log));
  const Metrics& last = result.log.back().metrics;
  std::cout << "trained " << rc.train.epochs << " epochs on " << ds.instances.size()
            << " instances: acc_main=" << format_double(last.acc_main)
            << " loss_total=" << format_double(last.loss_total) << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& metrics_out) {
  SavedModel sm = load_model(model_path);
  Dataset ds = load_dataset(data_path);
  Metrics m = evaluate(sm.model, ds, sm.lga_enabled);
  if (!metrics_out.empty())
    write_text_atomic(metrics_out, metrics_csv({{0, "eval", m}}));
  std::cout << "eval on " << ds.instances.size() << " instances ("
            << (sm.lga_enabled ? "lga" : "baseline") << "):"
            << " acc_main=" << format_double(m.acc_main)
            << " acc_aux=" << format_double(m.acc_aux)
            << " loss_total=" << format_double(m.loss_total)
            << " mask_dist=" << format_double(m.mask_dist)
            << " box_l1=" << format_double(m.box_l1) << "\n";
  return 0;
}

int cmd_dump_masks(const std::string& model_path, const std::string& data_path,
                   const std::string& range, const std::string& out_dir) {
  SavedModel sm = load_model(model_path);
  Dataset ds = load_dataset(data_path);
  std::size_t lo = 0, hi = ds.instances.size();
  if (!range.empty()) {
    std::size_t colon = range.find(':');
    if (colon == std::string::npos) throw ConfigError("index-range: expected start:end");
    try {
      lo = std::stoull(range.substr(0, colon));
      hi = std::stoull(range.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("index-range: bad integers in '" + range + "'");
    }
  }
  if (lo >= hi || hi > ds.instances.size())
    throw ConfigError("index-range: [" + std::to_string(lo) + "," + std::to_string(hi) +
                      ") out of bounds for dataset of " + std::to_string(ds.instances.size()));
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  std::size_t k = sm.model.config.masks;
  std::ostringstream csv;
  csv << "index,label";
  for (std::size_t g = 1; g <= k; ++g) csv << ",mu_y_" << g;
  for (std::size_t g = 1; g <= k; ++g) csv << ",mu_x_" << g;
  for (std::size_t g = 1; g <= k; ++g) csv << ",sigma_" << g;
  csv << ",patch_cy,patch_cx\n";

  for (std::size_t i = lo; i < hi; ++i) {
    const Instance& inst = ds.instances[i];
    Tape tape;
    ForwardGraph g = forward(tape, sm.model, inst.features, true, false);
    write_pgm(tape.value(g.mask), out_dir + "/mask_" + std::to_string(i) + ".pgm");
    GaussianParams p = read_params(tape, g.params, k);
    csv << i << ',' << inst.label;
    for (std::size_t gi = 0; gi < k; ++gi) csv << ',' << format_double(p.centers[gi][0]);
    for (std::size_t gi = 0; gi < k; ++gi) csv << ',' << format_double(p.centers[gi][1]);
    for (std::size_t gi = 0; gi < k; ++gi) csv << ',' << format_double(p.scales[gi]);
    csv << ',' << format_double(inst.patch_center[0]) << ','
        << format_double(inst.patch_center[1]) << '\n';
  }
  write_text_atomic(out_dir + "/masks.csv", csv.str());
  std::cout << "wrote " << (hi - lo) << " masks to " << out_dir << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  if (tolerance <= 0.0) throw ConfigError("tolerance: must be positive");
  std::vector<SuiteRow> rows = gradcheck_suite(seed, tolerance);
  bool all = true;
  for (const SuiteRow& r : rows) {
    std::printf("%-24s max_rel_err=%.3e skipped=%zu %s\n", r.name.c_str(), r.max_rel_error,
                r.skipped, r.passed ? "PASS" : "FAIL");
    all = all && r.passed;
  }
  std::printf("gradcheck: %s (tolerance %.3e)\n", all ? "PASS" : "FAIL", tolerance);
  return all ? 0 : 1;
}

int cmd_compare(const CommonOpts& common, const std::string& seeds_spec,
                const std::string& out) {
  RunConfig rc = common.make();
  rc.finalize();
  std::vector<std::uint64_t> seeds = parse_seeds(seeds_spec);
  AblationReport report =
      ablation_compare(seeds, rc.task, rc.lga, rc.train, rc.n_train, rc.n_val);
  write_text_atomic(out, report.to_csv());
  std::cout << "compare over " << seeds.size() << " seeds:"
            << " mean_acc_diff=" << format_double(report.mean_acc_diff)
            << " mean_lga_mask_dist=" << format_double(report.mean_lga_mask_dist)
            << " const_center_dist=" << format_double(report.mean_const_center_dist) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loss-guided attention over RoI features: data, training, ablation"};
  app.require_subcommand(1);

  CommonOpts gen_common, train_common, compare_common;
  std::uint64_t gen_seed = 0, gen_n = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic camouflage dataset (LGAF)");
  gen_common.attach(gen);
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "dataset seed");
  auto* gen_n_opt = gen->add_option("--n", gen_n, "instance count");
  gen->add_option("--out", gen_out, "output LGAF path")->required();

  std::string train_data, train_model_out, train_metrics;
  auto* tr = app.add_subcommand("train", "train a model on an LGAF dataset");
  train_common.attach(tr);
  tr->add_option("--data", train_data, "input LGAF dataset")->required();
  tr->add_option("--out-model", train_model_out, "output LGAM path")->required();
  tr->add_option("--metrics", train_metrics, "output metrics CSV path")->required();

  std::string eval_model, eval_data, eval_metrics;
  auto* ev = app.add_subcommand("eval", "evaluate a saved model");
  ev->add_option("--model", eval_model, "LGAM model file")->required();
  ev->add_option("--data", eval_data, "LGAF dataset")->required();
  ev->add_option("--metrics-out", eval_metrics, "single-row metrics CSV path");

  std::string dm_model, dm_data, dm_range, dm_out;
  auto* dm = app.add_subcommand("dump-masks", "export combined masks as PGM heatmaps");
  dm->add_option("--model", dm_model, "LGAM model file")->required();
  dm->add_option("--data", dm_data, "LGAF dataset")->required();
  dm->add_option("--index-range", dm_range, "start:end, end exclusive (default: all)");
  dm->add_option("--out-dir", dm_out, "output directory")->required();

  std::uint64_t gc_seed = 42;
  double gc_tol = 1e-6;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op and the full loss");
  gc->add_option("--seed", gc_seed, "random point seed");
  gc->add_option("--tolerance", gc_tol, "max allowed relative error");

  std::string cmp_seeds, cmp_out;
  auto* cmp = app.add_subcommand("compare", "paired LGA-vs-baseline ablation");
  compare_common.attach(cmp);
  cmp->add_option("--seeds", cmp_seeds, "comma-separated seed list (>= 2)")->required();
  cmp->add_option("--out", cmp_out, "output ablation CSV path")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen_data(gen_common, gen_seed, gen_seed_opt->count() > 0, gen_n,
                          gen_n_opt->count() > 0, gen_out);
    if (tr->parsed()) return cmd_train(train_common, train_data, train_model_out, train_metrics);
    if (ev->parsed()) return cmd_eval(eval_model, eval_data, eval_metrics);
    if (dm->parsed()) return cmd_dump_masks(dm_model, dm_data, dm_range, dm_out);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_tol);
    if (cmp->parsed()) return cmd_compare(compare_common, cmp_seeds, cmp_out);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

// Command-line front end for the LUPI detection pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lupi/errors.hpp"
#include "lupi/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitTraining = 3;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
};

void add_common(CLI::App* cmd, Common& c, bool with_seed, bool with_alpha) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->required();
  if (with_seed) cmd->add_option("--seed", c.seed, "override the relevant seed");
  if (with_alpha) cmd->add_option("--alpha", c.alpha, "distillation weight in [0,1]");
}

lupi::ExperimentConfig resolve(const Common& c) {
  lupi::ExperimentConfig cfg;
  if (!c.config.empty()) cfg = lupi::load_config(c.config);
  if (c.alpha) cfg.train.alpha = *c.alpha;
  cfg.validate();
  return cfg;
}

void print_report(const lupi::EvalReport& r) {
  std::printf("map50 %s map75 %s map5095 %s P %s R %s F1 %s\n", lupi::format_metric(r.map50).c_str(),
              lupi::format_metric(r.map75).c_str(), lupi::format_metric(r.map5095).c_str(),
              lupi::format_metric(r.precision).c_str(), lupi::format_metric(r.recall).c_str(),
              lupi::format_metric(r.f1).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning using privileged information for object detection"};
  app.require_subcommand(1);

  Common gen;
  bool masks = false;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(generate, gen, true, false);
  generate->add_flag("--masks", masks, "also write privileged masks");

  Common prep;
  std::string prep_in;
  auto* prepare = app.add_subcommand("prepare", "tile, resize and mask a dataset");
  add_common(prepare, prep, false, false);
  prepare->add_option("--data", prep_in, "input dataset directory")->required();

  Common tt;
  std::string tt_data;
  auto* train_teacher = app.add_subcommand("train-teacher", "train the 4-plane teacher");
  add_common(train_teacher, tt, true, false);
  train_teacher->add_option("--data", tt_data, "prepared dataset")->required();

  Common ts;
  std::string ts_data;
  std::string ts_teacher;
  auto* train_student = app.add_subcommand("train-student", "train an RGB student (alpha 0 is the baseline)");
  add_common(train_student, ts, true, true);
  train_student->add_option("--data", ts_data, "prepared dataset")->required();
  train_student->add_option("--teacher", ts_teacher, "teacher checkpoint");

  Common sw;
  std::string sw_data;
  auto* sweep = app.add_subcommand("sweep", "teacher plus one student per (alpha, seed)");
  add_common(sweep, sw, false, false);
  sweep->add_option("--data", sw_data, "prepared dataset")->required();

  Common ev;
  std::string ev_ckpt;
  std::string ev_data;
  std::string ev_split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a prepared split");
  add_common(evaluate, ev, false, false);
  evaluate->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  evaluate->add_option("--data", ev_data, "prepared dataset")->required();
  evaluate->add_option("--split", ev_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  Common ce;
  std::string ce_ckpt;
  std::string ce_data;
  auto* cross = app.add_subcommand("cross-eval", "score an RGB checkpoint on a foreign dataset");
  add_common(cross, ce, false, false);
  cross->add_option("--checkpoint", ce_ckpt, "student or baseline checkpoint")->required();
  cross->add_option("--data", ce_data, "raw dataset directory")->required();

  std::string rep_out;
  std::vector<std::string> rep_runs;
  auto* report = app.add_subcommand("report", "merge sweep summaries into CSV and SVG");
  report->add_option("--out", rep_out, "output directory")->required();
  report->add_option("runs", rep_runs, "sweep output directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*generate) {
      auto cfg = resolve(gen);
      if (gen.seed) cfg.data.synth.seed = *gen.seed;
      lupi::cmd_generate(cfg, gen.out, masks);
    } else if (*prepare) {
      lupi::cmd_prepare(resolve(prep), prep_in, prep.out);
    } else if (*train_teacher) {
      auto cfg = resolve(tt);
      if (tt.seed) cfg.train.seed = *tt.seed;
      print_report(lupi::cmd_train_teacher(cfg, tt_data, tt.out, &std::cerr).test_report);
    } else if (*train_student) {
      auto cfg = resolve(ts);
      if (ts.seed) cfg.train.seed = *ts.seed;
      print_report(lupi::cmd_train_student(cfg, ts_data, ts_teacher, ts.out, &std::cerr).test_report);
    } else if (*sweep) {
      const auto rows = lupi::cmd_sweep(resolve(sw), sw_data, sw.out, &std::cerr);
      std::cout << lupi::summary_csv(rows);
    } else if (*evaluate) {
      print_report(lupi::cmd_evaluate(resolve(ev), ev_ckpt, ev_data, ev.out, lupi::split_from_string(ev_split)));
    } else if (*cross) {
      print_report(lupi::cmd_cross_eval(resolve(ce), ce_ckpt, ce_data, ce.out));
    } else if (*report) {
      std::vector<fs::path> runs(rep_runs.begin(), rep_runs.end());
      lupi::cmd_report(runs, rep_out);
    }
  } catch (const lupi::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const lupi::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const lupi::TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kExitTraining;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kExitTraining;
  }
  return 0;
}

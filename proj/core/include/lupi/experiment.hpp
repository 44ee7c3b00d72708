#pragma once

// Experiment orchestration behind the command-line tool: generate, prepare,
// train, sweep, evaluate, cross-evaluate and report.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lupi/distill.hpp"
#include "lupi/metrics.hpp"
#include "lupi/preprocess.hpp"
#include "lupi/synth.hpp"

namespace lupi {

struct ExperimentConfig {
  struct Data {
    std::optional<std::filesystem::path> source;
    SynthConfig synth;
    std::optional<TileSpec> tile = TileSpec{};
    /// Square resize target; defaults to the model input size.
    std::optional<int> resize;
  };
  struct Sweep {
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::uint64_t> seeds{1, 2, 3};
  };

  Data data;
  int input_size = 64;
  DistillConfig train;
  EvalConfig eval;
  Sweep sweep;

  int resize_target() const { return data.resize.value_or(input_size); }

  /// Throws UsageError on invalid values.
  void validate() const;
};

/// Missing sections and fields keep their defaults; unknown keys are a
/// UsageError.
ExperimentConfig config_from_json(std::string_view text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& dir, const ExperimentConfig& config);

/// Loads one split of a prepared dataset (<dir>/annotations.json,
/// <dir>/images), optionally attaching <dir>/masks.
Dataset load_prepared(const std::filesystem::path& dir, Split split, bool with_masks);

void cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                  bool write_masks = false);

/// tile (if configured) -> resize -> privileged mask, written as a new
/// dataset. Tiles inherit their source image's split; tiles without
/// annotations are kept.
void cmd_prepare(const ExperimentConfig& config, const std::filesystem::path& in_dir,
                 const std::filesystem::path& out_dir);

struct RunArtifacts {
  TrainResult training;
  EvalReport test_report;
};

RunArtifacts cmd_train_teacher(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                               const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

/// teacher_checkpoint may be empty when config.train.alpha == 0.
RunArtifacts cmd_train_student(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                               const std::filesystem::path& teacher_checkpoint,
                               const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

struct SummaryRow {
  std::string role;
  std::optional<double> alpha;
  std::uint64_t seed = 0;
  double map50 = 0.0;
  double map75 = 0.0;
  double map5095 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

std::string summary_csv(const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> parse_summary_csv(std::string_view text);

/// One teacher, then a student per (alpha, seed) in ascending order.
/// Writes <out>/teacher, <out>/runs/alpha_<a>_seed_<s>, summary.csv,
/// sweep.svg and status.json. On a training failure the summary holds the
/// completed rows and status.json is marked incomplete before rethrowing.
std::vector<SummaryRow> cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                                  const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

/// Scores a checkpoint on a split of a prepared dataset.
EvalReport cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                        Split split = Split::kTest);

/// RGB-only scoring of a student or baseline checkpoint on a foreign dataset
/// (every image, resized, never tiled). Throws UsageError for 4-plane models.
EvalReport cmd_cross_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                          const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

/// Merges <run>/summary.csv files into <out>/report.csv (run_id column first)
/// and draws <out>/report.svg: one group per metric, baseline vs best student
/// per run. Throws UsageError for an empty run list.
void cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace lupi

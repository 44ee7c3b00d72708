#include "lupi/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lupi/errors.hpp"
#include "lupi/ingest.hpp"
#include "lupi/pnm.hpp"
#include "lupi/privileged.hpp"

namespace lupi {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Reads known keys from a JSON object, rejecting anything else.
class Fields {
 public:
  Fields(const nlohmann::json& obj, std::string section) : obj_(obj), section_(std::move(section)) {
    if (!obj.is_object()) throw UsageError("config section '" + section_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError("config field '" + section_ + "." + key + "' has the wrong type");
    }
  }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.contains(it.key())) throw UsageError("unknown config field '" + section_ + "." + it.key() + "'");
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string section_;
  std::set<std::string> seen_;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

void ensure_out_dir(const fs::path& dir) {
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  if (!fs::exists(parent)) throw DataError("output parent directory '" + parent.string() + "' does not exist");
  fs::create_directories(dir);
}

std::string format_alpha(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", alpha);
  return buf;
}

SummaryRow row_from(const std::string& role, std::optional<double> alpha, std::uint64_t seed,
                    const EvalReport& r) {
  return {role, alpha, seed, r.map50, r.map75, r.map5095, r.precision, r.recall, r.f1};
}

void write_eval(const fs::path& dir, const ModelEvaluation& ev) {
  write_text(dir / "eval.json", ev.report.to_json());
  write_text(dir / "eval.csv", ev.report.to_csv());
  write_text(dir / "predictions.json", predictions_to_json(ev.predictions));
}

EpochCallback progress_printer(std::ostream* progress, std::string tag) {
  if (progress == nullptr) return {};
  return [progress, tag = std::move(tag)](const EpochRecord& e) {
    *progress << tag << " epoch " << e.epoch << " loss " << format_metric(e.train_loss) << " val_map50 "
              << format_metric(e.val_map50) << " since_best " << e.epochs_since_best << '\n';
  };
}

struct Bar {
  std::string label;
  double value;
};

// Hand-rolled grouped bar chart.
std::string grouped_bar_svg(const std::string& title, const std::vector<std::string>& groups,
                            const std::vector<std::string>& series,
                            const std::vector<std::vector<double>>& values) {
  static const std::array<const char*, 8> kColours{"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                                                   "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};
  const double bar_w = 18.0;
  const double gap = 24.0;
  const double group_w = bar_w * static_cast<double>(series.size()) + gap;
  const double left = 50.0;
  const double top = 40.0;
  const double plot_h = 240.0;
  const double width = left + group_w * static_cast<double>(groups.size()) + 160.0;
  const double height = top + plot_h + 60.0;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
    << left + group_w * static_cast<double>(groups.size()) << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = top + plot_h - plot_h * t / 4.0;
    s << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << format_metric(t / 4.0).substr(0, 4)
      << "</text>\n";
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = left + gap / 2 + group_w * static_cast<double>(g);
    s << "<g class=\"group\" data-group=\"" << groups[g] << "\">\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double v = std::clamp(values[g][k], 0.0, 1.0);
      const double h = plot_h * v;
      s << "<rect x=\"" << gx + bar_w * static_cast<double>(k) << "\" y=\"" << top + plot_h - h
        << "\" width=\"" << bar_w - 2 << "\" height=\"" << h << "\" fill=\"" << kColours[k % kColours.size()]
        << "\"><title>" << series[k] << ": " << format_metric(values[g][k]) << "</title></rect>\n";
    }
    s << "<text x=\"" << gx + bar_w * static_cast<double>(series.size()) / 2 << "\" y=\""
      << top + plot_h + 16 << "\" text-anchor=\"middle\">" << groups[g] << "</text>\n";
    s << "</g>\n";
  }
  const double lx = left + group_w * static_cast<double>(groups.size()) + 16;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double ly = top + 16.0 * static_cast<double>(k);
    s << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
      << kColours[k % kColours.size()] << "\"/>\n";
    s << "<text x=\"" << lx + 14 << "\" y=\"" << ly + 9 << "\">" << series[k] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    data.synth.validate();
    if (data.tile) data.tile->validate();
    train.validate();
    DetectorConfig{3, 1, input_size}.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  if (data.resize && *data.resize < 1) throw UsageError("data.resize must be positive");
  if (sweep.alphas.empty() || sweep.seeds.empty()) throw UsageError("sweep needs at least one alpha and one seed");
  for (double a : sweep.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw UsageError("sweep alpha " + format_alpha(a) + " outside [0,1]");
  }
  if (eval.iou_thresholds.empty()) throw UsageError("eval.thresholds must not be empty");
  if (!(eval.score_threshold >= 0.0 && eval.score_threshold <= 1.0)) {
    throw UsageError("eval.score_threshold must lie in [0,1]");
  }
}

ExperimentConfig config_from_json(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Fields top(root, "config");
  if (const auto* d = top.sub("data")) {
    Fields f(*d, "data");
    if (const auto* src = f.sub("source"); src && !src->is_null()) cfg.data.source = src->get<std::string>();
    if (const auto* s = f.sub("synth")) {
      Fields sf(*s, "data.synth");
      auto& sc = cfg.data.synth;
      sf.read("num_images", sc.num_images);
      sf.read("image_size", sc.image_size);
      sf.read("num_classes", sc.num_classes);
      sf.read("objects_min", sc.objects_min);
      sf.read("objects_max", sc.objects_max);
      sf.read("side_min", sc.side_min);
      sf.read("side_max", sc.side_max);
      sf.read("occlusion_rate", sc.occlusion_rate);
      sf.read("noise_scale", sc.noise_scale);
      sf.read("seed", sc.seed);
      sf.finish();
    }
    if (const auto* t = f.sub("tile")) {
      if (t->is_null()) {
        cfg.data.tile.reset();
      } else {
        Fields tf(*t, "data.tile");
        TileSpec spec;
        tf.read("grid", spec.grid);
        tf.read("min_visibility", spec.min_visibility);
        tf.read("min_side_px", spec.min_side_px);
        tf.finish();
        cfg.data.tile = spec;
      }
    }
    if (const auto* r = f.sub("resize"); r && !r->is_null()) cfg.data.resize = r->get<int>();
    f.finish();
  }
  if (const auto* m = top.sub("model")) {
    Fields f(*m, "model");
    f.read("input_size", cfg.input_size);
    f.finish();
  }
  if (const auto* t = top.sub("train")) {
    Fields f(*t, "train");
    auto& tc = cfg.train;
    f.read("alpha", tc.alpha);
    f.read("lr", tc.lr);
    f.read("adam_beta1", tc.adam_beta1);
    f.read("adam_beta2", tc.adam_beta2);
    f.read("adam_eps", tc.adam_eps);
    f.read("weight_decay", tc.weight_decay);
    f.read("max_epochs", tc.max_epochs);
    f.read("patience", tc.patience);
    f.read("batch_size", tc.batch_size);
    f.read("seed", tc.seed);
    f.finish();
  }
  if (const auto* e = top.sub("eval")) {
    Fields f(*e, "eval");
    f.read("score_threshold", cfg.eval.score_threshold);
    f.read("nms_iou", cfg.eval.nms_iou);
    f.read("operating_score", cfg.eval.operating_score);
    f.read("operating_iou", cfg.eval.operating_iou);
    f.read("thresholds", cfg.eval.iou_thresholds);
    f.finish();
  }
  if (const auto* s = top.sub("sweep")) {
    Fields f(*s, "sweep");
    f.read("alphas", cfg.sweep.alphas);
    f.read("seeds", cfg.sweep.seeds);
    f.finish();
  }
  top.finish();
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  ojson root;
  const auto& sc = cfg.data.synth;
  ojson data;
  data["source"] = cfg.data.source ? ojson(cfg.data.source->string()) : ojson(nullptr);
  data["synth"] = {{"num_images", sc.num_images},   {"image_size", sc.image_size},
                   {"num_classes", sc.num_classes}, {"objects_min", sc.objects_min},
                   {"objects_max", sc.objects_max}, {"side_min", sc.side_min},
                   {"side_max", sc.side_max},       {"occlusion_rate", sc.occlusion_rate},
                   {"noise_scale", sc.noise_scale}, {"seed", sc.seed}};
  if (cfg.data.tile) {
    data["tile"] = {{"grid", cfg.data.tile->grid},
                    {"min_visibility", cfg.data.tile->min_visibility},
                    {"min_side_px", cfg.data.tile->min_side_px}};
  } else {
    data["tile"] = nullptr;
  }
  data["resize"] = cfg.data.resize ? ojson(*cfg.data.resize) : ojson(nullptr);
  root["data"] = std::move(data);
  root["model"] = {{"input_size", cfg.input_size},
                   {"backbone_widths", DetectorConfig::kBackboneWidths},
                   {"embed_dim", DetectorConfig::kEmbedDim}};
  const auto& tc = cfg.train;
  root["train"] = {{"alpha", tc.alpha},           {"lr", tc.lr},
                   {"adam_beta1", tc.adam_beta1}, {"adam_beta2", tc.adam_beta2},
                   {"adam_eps", tc.adam_eps},     {"weight_decay", tc.weight_decay},
                   {"max_epochs", tc.max_epochs}, {"patience", tc.patience},
                   {"batch_size", tc.batch_size}, {"seed", tc.seed}};
  root["eval"] = {{"score_threshold", cfg.eval.score_threshold},
                  {"nms_iou", cfg.eval.nms_iou},
                  {"operating_score", cfg.eval.operating_score},
                  {"operating_iou", cfg.eval.operating_iou},
                  {"thresholds", cfg.eval.iou_thresholds}};
  root["sweep"] = {{"alphas", cfg.sweep.alphas}, {"seeds", cfg.sweep.seeds}};
  return root.dump(2) + "\n";
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  // model.backbone_widths / embed_dim are echoed for readers; accept them back.
  auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw UsageError("config '" + path.string() + "' is not valid JSON");
  if (j.contains("model") && j["model"].is_object()) {
    j["model"].erase("backbone_widths");
    j["model"].erase("embed_dim");
  }
  return config_from_json(j.dump());
}

void write_config(const fs::path& dir, const ExperimentConfig& config) {
  write_text(dir / "config.json", config_to_json(config));
}

Dataset load_prepared(const fs::path& dir, Split split, bool with_masks) {
  const auto manifest = read_manifest(dir / "annotations.json");
  Dataset ds = load_dataset(manifest, dir / "images", LoadOptions{split, true});
  if (with_masks) load_privileged_masks(ds, dir / "masks");
  return ds;
}

void cmd_generate(const ExperimentConfig& config, const fs::path& out_dir, bool write_masks) {
  config.validate();
  const auto data = generate_dataset(config.data.synth);
  write_synth_dataset(data, out_dir, write_masks);
  write_config(out_dir, config);
}

void cmd_prepare(const ExperimentConfig& config, const fs::path& in_dir, const fs::path& out_dir) {
  config.validate();
  const auto manifest = read_manifest(in_dir / "annotations.json");
  ensure_out_dir(out_dir);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");

  CocoManifest out;
  out.categories = manifest.categories;
  const int nc = static_cast<int>(manifest.categories.size());
  const int target = config.resize_target();
  std::int64_t next_image = 1;
  std::int64_t next_ann = 1;

  // One image at a time keeps memory flat for large sources.
  for (const auto& rec : manifest.images) {
    CocoManifest single = manifest;
    single.images = {rec};
    std::erase_if(single.annotations, [&](const CocoAnnotation& a) { return a.image_id != rec.id; });
    const Dataset src = load_dataset(single, in_dir / "images", LoadOptions{std::nullopt, false});

    std::vector<ImageSample> pieces;
    if (config.data.tile) {
      try {
        pieces = tile_image(src.samples.front(), *config.data.tile);
      } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
      }
    } else {
      pieces.push_back(src.samples.front());
    }
    for (const auto& piece : pieces) {
      const auto sample = attach_privileged_channel(resize_sample(piece, target, target), nc);
      pnm::write_ppm(out_dir / "images" / (sample.id + ".ppm"), sample.rgb);
      write_mask(out_dir / "masks" / mask_file_name(sample.id), *sample.privileged);
      const std::int64_t image_id = next_image++;
      out.images.push_back({image_id, sample.id + ".ppm", sample.width(), sample.height(), rec.split});
      for (const auto& a : sample.annotations) {
        out.annotations.push_back({next_ann++, image_id, manifest.categories[a.class_id.value].id,
                                   {a.box.x_min(), a.box.y_min(), a.box.width(), a.box.height()}});
      }
    }
  }
  write_manifest(out_dir / "annotations.json", out);
  write_config(out_dir, config);
}

RunArtifacts cmd_train_teacher(const ExperimentConfig& config, const fs::path& data_dir,
                               const fs::path& out_dir, std::ostream* progress) {
  config.validate();
  const auto train = load_prepared(data_dir, Split::kTrain, true);
  const auto val = load_prepared(data_dir, Split::kVal, true);
  const auto test = load_prepared(data_dir, Split::kTest, true);
  ensure_out_dir(out_dir);
  write_config(out_dir, config);

  RunArtifacts run;
  run.training = train_teacher(train, val, config.train, config.eval, progress_printer(progress, "teacher"));
  save_checkpoint(out_dir / "teacher.ckpt", run.training.model, run.training.meta);
  write_text(out_dir / "train_log.csv", run.training.log.to_csv());
  const auto ev = evaluate_model(run.training.model, test, config.eval);
  write_eval(out_dir, ev);
  run.test_report = ev.report;
  return run;
}

RunArtifacts cmd_train_student(const ExperimentConfig& config, const fs::path& data_dir,
                               const fs::path& teacher_checkpoint, const fs::path& out_dir,
                               std::ostream* progress) {
  config.validate();
  const bool distill = config.train.alpha > 0.0;
  std::optional<Checkpoint> teacher;
  if (distill) {
    if (teacher_checkpoint.empty()) throw UsageError("alpha > 0 requires --teacher <checkpoint>");
    teacher = load_checkpoint(teacher_checkpoint);
    if (teacher->model.config.in_planes != 4) throw UsageError("--teacher must be a 4-plane checkpoint");
  }
  const auto train = load_prepared(data_dir, Split::kTrain, distill);
  const auto val = load_prepared(data_dir, Split::kVal, false);
  const auto test = load_prepared(data_dir, Split::kTest, false);
  ensure_out_dir(out_dir);
  write_config(out_dir, config);

  RunArtifacts run;
  run.training = train_student(train, val, teacher ? &teacher->model : nullptr, config.train, config.eval,
                               progress_printer(progress, "student a=" + format_alpha(config.train.alpha)));
  save_checkpoint(out_dir / "student.ckpt", run.training.model, run.training.meta);
  write_text(out_dir / "train_log.csv", run.training.log.to_csv());
  const auto ev = evaluate_model(run.training.model, test, config.eval);
  write_eval(out_dir, ev);
  run.test_report = ev.report;
  return run;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "role,alpha,seed,map50,map75,map5095,precision,recall,f1\n";
  for (const auto& r : rows) {
    out << r.role << ',' << (r.alpha ? format_alpha(*r.alpha) : std::string()) << ',' << r.seed << ','
        << format_metric(r.map50) << ',' << format_metric(r.map75) << ',' << format_metric(r.map5095) << ','
        << format_metric(r.precision) << ',' << format_metric(r.recall) << ',' << format_metric(r.f1) << '\n';
  }
  return out.str();
}

std::vector<SummaryRow> parse_summary_csv(std::string_view text) {
  std::vector<SummaryRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("role,alpha,seed", 0) != 0) {
    throw DataError("summary CSV has an unexpected header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 9) throw DataError("summary CSV row has " + std::to_string(cells.size()) + " fields");
    try {
      SummaryRow r;
      r.role = cells[0];
      if (!cells[1].empty()) r.alpha = std::stod(cells[1]);
      r.seed = std::stoull(cells[2]);
      r.map50 = std::stod(cells[3]);
      r.map75 = std::stod(cells[4]);
      r.map5095 = std::stod(cells[5]);
      r.precision = std::stod(cells[6]);
      r.recall = std::stod(cells[7]);
      r.f1 = std::stod(cells[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw DataError("summary CSV row is malformed: " + line);
    }
  }
  return rows;
}

std::vector<SummaryRow> cmd_sweep(const ExperimentConfig& config, const fs::path& data_dir,
                                  const fs::path& out_dir, std::ostream* progress) {
  config.validate();
  const auto train = load_prepared(data_dir, Split::kTrain, true);
  const auto val = load_prepared(data_dir, Split::kVal, true);
  const auto test = load_prepared(data_dir, Split::kTest, true);
  ensure_out_dir(out_dir);
  write_config(out_dir, config);

  std::vector<SummaryRow> rows;
  auto flush = [&](bool complete, const std::string& error) {
    write_text(out_dir / "summary.csv", summary_csv(rows));
    ojson status;
    status["complete"] = complete;
    status["rows"] = rows.size();
    if (!error.empty()) status["error"] = error;
    write_text(out_dir / "status.json", status.dump(2) + "\n");
  };

  try {
    const fs::path tdir = out_dir / "teacher";
    fs::create_directories(tdir);
    write_config(tdir, config);
    const auto teacher = train_teacher(train, val, config.train, config.eval, progress_printer(progress, "teacher"));
    save_checkpoint(tdir / "teacher.ckpt", teacher.model, teacher.meta);
    write_text(tdir / "train_log.csv", teacher.log.to_csv());
    const auto tev = evaluate_model(teacher.model, test, config.eval);
    write_eval(tdir, tev);
    rows.push_back(row_from("teacher", std::nullopt, config.train.seed, tev.report));

    auto alphas = config.sweep.alphas;
    auto seeds = config.sweep.seeds;
    std::sort(alphas.begin(), alphas.end());
    std::sort(seeds.begin(), seeds.end());
    for (double alpha : alphas) {
      for (auto seed : seeds) {
        ExperimentConfig run_cfg = config;
        run_cfg.train.alpha = alpha;
        run_cfg.train.seed = seed;
        const fs::path rdir = out_dir / "runs" / ("alpha_" + format_alpha(alpha) + "_seed_" + std::to_string(seed));
        fs::create_directories(rdir);
        write_config(rdir, run_cfg);
        const auto run = train_student(train, val, &teacher.model, run_cfg.train, config.eval,
                                       progress_printer(progress, "student a=" + format_alpha(alpha) +
                                                                      " seed=" + std::to_string(seed)));
        save_checkpoint(rdir / "student.ckpt", run.model, run.meta);
        write_text(rdir / "train_log.csv", run.log.to_csv());
        const auto ev = evaluate_model(run.model, test, config.eval);
        write_eval(rdir, ev);
        rows.push_back(row_from(alpha > 0.0 ? "student" : "baseline", alpha, seed, ev.report));
      }
    }
  } catch (const std::exception& e) {
    flush(false, e.what());
    if (dynamic_cast<const DataError*>(&e) != nullptr) throw;
    throw TrainingError(std::string("sweep aborted: ") + e.what());
  }
  flush(true, "");

  // Mean mAP@50 and F1 per alpha over seeds.
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> by_alpha;
  for (const auto& r : rows) {
    if (!r.alpha) continue;
    by_alpha[*r.alpha].first.push_back(r.map50);
    by_alpha[*r.alpha].second.push_back(r.f1);
  }
  std::vector<std::string> groups;
  std::vector<std::vector<double>> values;
  for (const auto& [alpha, v] : by_alpha) {
    groups.push_back("alpha=" + format_alpha(alpha));
    values.push_back({mean(v.first), mean(v.second)});
  }
  write_text(out_dir / "sweep.svg",
             grouped_bar_svg("Student mAP@50 and F1 versus alpha (mean over seeds)", groups,
                             {"mAP@50", "F1"}, values));
  return rows;
}

EvalReport cmd_evaluate(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& data_dir,
                        const fs::path& out_dir, Split split) {
  const auto ck = load_checkpoint(checkpoint);
  const auto data = load_prepared(data_dir, split, ck.model.config.in_planes == 4);
  ensure_out_dir(out_dir);
  write_config(out_dir, config);
  const auto ev = evaluate_model(ck.model, data, config.eval);
  write_eval(out_dir, ev);
  return ev.report;
}

EvalReport cmd_cross_eval(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& data_dir,
                          const fs::path& out_dir) {
  const auto ck = load_checkpoint(checkpoint);
  if (ck.model.config.in_planes != 3) {
    throw UsageError("cross-eval needs a student or baseline checkpoint; '" + checkpoint.string() +
                     "' is a " + std::to_string(ck.model.config.in_planes) + "-plane model");
  }
  const auto manifest = read_manifest(data_dir / "annotations.json");
  const auto raw = load_dataset(manifest, data_dir / "images", LoadOptions{std::nullopt, false});
  if (raw.num_classes() != ck.model.config.num_classes) {
    throw DataError("dataset has " + std::to_string(raw.num_classes()) + " classes, checkpoint expects " +
                    std::to_string(ck.model.config.num_classes));
  }
  Dataset data;
  data.categories = raw.categories;
  data.split = Split::kTest;
  const int side = ck.model.config.input_size;
  for (const auto& s : raw.samples) {
    auto r = resize_sample(s, side, side);
    for (auto& p : r.rgb) p = normalize_image(p);
    data.samples.push_back(std::move(r));
  }
  ensure_out_dir(out_dir);
  write_config(out_dir, config);
  const auto ev = evaluate_model(ck.model, data, config.eval);
  write_eval(out_dir, ev);
  return ev.report;
}

void cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw UsageError("report needs at least one run directory");
  std::ostringstream merged;
  merged << "run_id,role,alpha,seed,map50,map75,map5095,precision,recall,f1\n";

  static const std::array<const char*, 6> kMetricNames{"map5095", "map50", "map75", "P", "R", "F1"};
  auto metric_of = [](const SummaryRow& r, std::size_t m) {
    const std::array<double, 6> v{r.map5095, r.map50, r.map75, r.precision, r.recall, r.f1};
    return v[m];
  };

  std::vector<std::string> series;
  std::vector<std::array<double, 6>> series_values;
  for (const auto& dir : run_dirs) {
    const auto path = dir / "summary.csv";
    if (!fs::exists(path)) throw DataError("missing summary file '" + path.string() + "'");
    const auto text = read_text(path);
    const auto rows = parse_summary_csv(text);
    const std::string run_id = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty()) merged << run_id << ',' << line << '\n';
    }

    std::map<double, std::vector<const SummaryRow*>> by_alpha;
    for (const auto& r : rows) {
      if (r.alpha) by_alpha[*r.alpha].push_back(&r);
    }
    auto mean_metrics = [&](const std::vector<const SummaryRow*>& group) {
      std::array<double, 6> out{};
      for (std::size_t m = 0; m < 6; ++m) {
        std::vector<double> v;
        for (const auto* r : group) v.push_back(metric_of(*r, m));
        out[m] = mean(v);
      }
      return out;
    };
    if (auto it = by_alpha.find(0.0); it != by_alpha.end()) {
      series.push_back(run_id + " baseline");
      series_values.push_back(mean_metrics(it->second));
    }
    const std::vector<const SummaryRow*>* best = nullptr;
    double best_alpha = 0.0;
    double best_map = -1.0;
    for (const auto& [alpha, group] : by_alpha) {
      if (alpha == 0.0) continue;
      const double m = mean_metrics(group)[1];
      if (m > best_map) {
        best_map = m;
        best = &group;
        best_alpha = alpha;
      }
    }
    if (best != nullptr) {
      series.push_back(run_id + " student a=" + format_alpha(best_alpha));
      series_values.push_back(mean_metrics(*best));
    }
  }

  ensure_out_dir(out_dir);
  write_text(out_dir / "report.csv", merged.str());
  std::vector<std::string> groups(kMetricNames.begin(), kMetricNames.end());
  std::vector<std::vector<double>> values(groups.size(), std::vector<double>(series.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t k = 0; k < series.size(); ++k) values[g][k] = series_values[k][g];
  }
  write_text(out_dir / "report.svg", grouped_bar_svg("Baseline vs best student", groups, series, values));
}

}  // namespace lupi

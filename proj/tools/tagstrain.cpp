// Command-line entry point: dataset generation, training, inference, strain
// export, evaluation and the registration baseline.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "tagstrain/tagstrain.hpp"

namespace fs = std::filesystem;
using namespace tagstrain;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool force = false;

  // phantom gen
  std::string out;
  int n = 0;

  // train
  std::string network;
  std::string data;
  int epochs = 0;

  // infer / strain / baseline / eval
  std::string localizer, tracker, cine, landmarks, init, box_out, truth_landmarks;
  std::string pred_dir, truth_dir, boxes_dir;
  std::optional<double> throughput_fps;
  bool compare = false;
};

/// Effective run configuration: defaults, then the config file, then --seed.
RunConfig effective_config(const Options& o) {
  RunConfig c;
  if (!o.config_path.empty()) c = load_run_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  return c;
}

void print_line(const Json& j) { std::cout << j.dump() << std::endl; }

std::string case_id_from(const std::string& header_id, const std::string& path) {
  if (!header_id.empty()) return header_id;
  const std::string name = fs::path(path).filename().string();
  return name.substr(0, name.find('.'));
}

void refuse_existing(const std::string& path, bool force) {
  if (!force && fs::exists(path)) throw IoError(path, "already exists (pass --force to overwrite)");
}

int cmd_phantom_gen(const Options& o) {
  if (o.n < 1) throw ConfigError("--n must be >= 1");
  const RunConfig c = effective_config(o);
  const Manifest m = generate_dataset(o.out, o.n, c.phantom, c.ranges, c.seed, c.splits, run_config_to_json(c));
  print_line(Json{{"cases", o.n},
                  {"train", m.split("train").size()},
                  {"val", m.split("val").size()},
                  {"test", m.split("test").size()},
                  {"manifest", (fs::path(o.out) / "manifest.json").string()}});
  return 0;
}

int cmd_train(const Options& o) {
  refuse_existing(o.out, o.force);
  if (o.epochs < 1) throw ConfigError("--epochs must be >= 1");
  const RunConfig c = effective_config(o);
  const Manifest m = read_manifest(o.data);

  const std::string log_path = o.out + ".metrics.jsonl";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError(log_path, "cannot open for writing");
  TrainOptions opt;
  opt.epochs = o.epochs;
  opt.seed = c.seed;
  opt.omega = c.omega;
  opt.preprocess = c.preprocess;
  opt.config = run_config_to_json(c);
  std::optional<Json> last_val, last_train;
  opt.on_metrics = [&](const Json& line) {
    log << line.dump() << '\n';
    log.flush();
    (line.value("split", "") == "val" ? last_val : last_train) = line;
  };

  const TrainResult r = o.network == "localizer" ? train_localizer(m, c.localizer, opt) : train_tracker(m, c.tracker, opt);
  save_checkpoint(o.out, r.checkpoint);
  Json summary = last_val ? *last_val : *last_train;
  summary["checkpoint"] = o.out;
  if (!r.step_losses.empty()) {
    summary["first_step_loss"] = r.step_losses.front();
    summary["final_step_loss"] = r.step_losses.back();
  }
  print_line(summary);
  return 0;
}

int cmd_infer(const Options& o) {
  refuse_existing(o.out, o.force);
  Models models = load_models(o.localizer, o.tracker);
  const CineFile cf = read_cine_file(o.cine);
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineResult r = full_pipeline(models, cf.cine);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string id = case_id_from(cf.cine.case_id, o.cine);
  LandmarkFile lf;
  lf.sequence = r.landmarks;
  lf.pixel_spacing_mm = cf.cine.pixel_spacing_mm;
  lf.transform = r.transform;
  Json cfg{{"localizer", o.localizer}, {"tracker", o.tracker}, {"cine", o.cine}};
  lf.header_extra = Json{{"case_id", id},
                         {"predicted_box", to_json_value(r.box.predicted)},
                         {"roi", to_json_value(r.box.roi)},
                         {"degenerate_box", r.box.degenerate},
                         {"provenance", provenance(cfg)}};
  write_landmarks(o.out, lf);

  if (!o.box_out.empty()) {
    Json rec{{"case_id", id}, {"predicted", to_json_value(r.box.predicted)}};
    if (!o.truth_landmarks.empty()) {
      const LandmarkFile truth = read_landmarks(o.truth_landmarks);
      rec["truth"] = to_json_value(landmarks_bbox(truth.sequence.frames.front()));
    }
    write_json_file(o.box_out, rec, 1);
  }
  const int frames = cf.cine.frame_count();
  print_line(Json{{"case_id", id},
                  {"frames", frames},
                  {"seconds", seconds},
                  {"frames_per_second", seconds > 0.0 ? frames / seconds : 0.0},
                  {"tracking_frames_per_second", r.track_seconds > 0.0 ? frames / r.track_seconds : 0.0},
                  {"degenerate_box", r.box.degenerate}});
  return 0;
}

int cmd_strain(const Options& o) {
  refuse_existing(o.out, o.force);
  const LandmarkFile lf = read_landmarks(o.landmarks);
  const SliceStrainCurve curve = strain_curve(lf.sequence);
  std::ostringstream os;
  write_strain_csv(os, curve, {"provenance " + provenance(Json{{"landmarks", o.landmarks}}).dump()});
  write_text_file(o.out, os.str());
  const SliceStrain& es = curve.per_frame[curve.es_frame];
  print_line(Json{{"es_frame", curve.es_frame},
                  {"eps_C_midwall", es.eps_C_midwall},
                  {"eps_C", es.eps_C},
                  {"eps_R", es.eps_R}});
  return 0;
}

int cmd_eval(const Options& o) {
  refuse_existing(o.out, o.force);
  const RunConfig c = effective_config(o);
  std::map<std::string, BoxPair> boxes;
  if (!o.boxes_dir.empty()) boxes = load_box_dir(o.boxes_dir);
  EvalOptions opt;
  opt.throughput_fps = o.throughput_fps;
  opt.significance_threshold = c.eval.threshold();
  opt.config = Json{{"pred", o.pred_dir}, {"truth", o.truth_dir}, {"boxes", o.boxes_dir}, {"run", run_config_to_json(c)}};
  auto pred = load_eval_dir(o.pred_dir);
  auto truth = load_eval_dir(o.truth_dir);
  const EvalReport r = o.compare ? compare_runs(std::move(pred), std::move(truth), opt)
                                 : evaluate_run(std::move(pred), std::move(truth), boxes, opt);
  const auto csvs = write_eval_report(o.out, r);
  const Json& mid = r.report.at("strain_es").at("eps_C_midwall").at("error");
  print_line(Json{{"report", o.out}, {"n_cases", r.report.at("n_cases")}, {"eps_C_midwall_error", mid}, {"csv", csvs}});
  return 0;
}

int cmd_baseline(const Options& o) {
  refuse_existing(o.out, o.force);
  const RunConfig c = effective_config(o);
  const CineFile cf = read_cine_file(o.cine);
  const LandmarkFile init = read_landmarks(o.init);
  if (init.sequence.size() < 1) throw DomainError(o.init + ": no landmark frames");
  const SSDTrack r = track_ssd(cf.cine, init.sequence.frames.front(), c.baseline);
  LandmarkFile lf;
  lf.sequence = r.sequence;
  lf.pixel_spacing_mm = cf.cine.pixel_spacing_mm;
  lf.status = std::vector<int>(r.status.begin(), r.status.end());
  lf.header_extra = Json{{"case_id", case_id_from(cf.cine.case_id, o.cine)},
                         {"provenance", provenance(Json{{"cine", o.cine},
                                                        {"init", o.init},
                                                        {"baseline", ssd_config_to_json(c.baseline)}})}};
  write_landmarks(o.out, lf);
  int flagged = 0;
  for (int s : r.status) flagged += s != kSSDOk;
  print_line(Json{{"frames", r.sequence.size()}, {"flagged_landmarks", flagged}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tagged cardiac MRI strain toolkit"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* cmd) { cmd->add_option("--config", o.config_path, "Run configuration JSON")->check(CLI::ExistingFile); };
  auto add_force = [&](CLI::App* cmd) { cmd->add_flag("--force", o.force, "Overwrite an existing output"); };

  CLI::App* phantom = app.add_subcommand("phantom", "Synthetic datasets")->require_subcommand(1);
  CLI::App* gen = phantom->add_subcommand("gen", "Generate a phantom dataset and manifest");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--n", o.n, "Number of cases")->required();
  gen->add_option("--seed", o.seed, "Dataset seed")->required();
  add_config(gen);

  CLI::App* train = app.add_subcommand("train", "Train the localizer or the tracker");
  train->add_option("network", o.network, "localizer or tracker")->required()->check(CLI::IsMember({"localizer", "tracker"}));
  train->add_option("--data", o.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "Checkpoint path")->required();
  train->add_option("--epochs", o.epochs, "Training epochs")->required();
  train->add_option("--seed", o.seed, "Training seed")->required();
  add_config(train);
  add_force(train);

  CLI::App* infer = app.add_subcommand("infer", "Localize, track and write landmarks for one cine");
  infer->add_option("--localizer", o.localizer, "Localizer checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--tracker", o.tracker, "Tracker checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--cine", o.cine, "Input cine")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", o.out, "Output landmark JSON")->required();
  infer->add_option("--box-out", o.box_out, "Also write the predicted box record here");
  infer->add_option("--truth-landmarks", o.truth_landmarks, "Truth landmarks for the box record")
      ->check(CLI::ExistingFile);
  add_force(infer);

  CLI::App* strain = app.add_subcommand("strain", "Strain curve CSV from a landmark file");
  strain->add_option("--landmarks", o.landmarks, "Landmark JSON")->required()->check(CLI::ExistingFile);
  strain->add_option("--out", o.out, "Output CSV")->required();
  add_force(strain);

  CLI::App* eval = app.add_subcommand("eval", "Evaluation report from prediction and truth directories");
  eval->add_option("--pred", o.pred_dir, "Predicted landmark directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--truth", o.truth_dir, "Truth landmark directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--boxes", o.boxes_dir, "Box record directory")->check(CLI::ExistingDirectory);
  eval->add_option("--out", o.out, "Report JSON path")->required();
  eval->add_option("--throughput-fps", o.throughput_fps, "Measured throughput to record");
  eval->add_flag("--compare", o.compare, "Treat the two directories as two observers");
  add_config(eval);
  add_force(eval);

  CLI::App* baseline = app.add_subcommand("baseline", "Block-matching registration baseline");
  baseline->add_option("--cine", o.cine, "Input cine")->required()->check(CLI::ExistingFile);
  baseline->add_option("--init", o.init, "Landmark JSON whose first frame seeds the tracking")
      ->required()
      ->check(CLI::ExistingFile);
  baseline->add_option("--out", o.out, "Output landmark JSON")->required();
  add_config(baseline);
  add_force(baseline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_phantom_gen(o);
    if (train->parsed()) return cmd_train(o);
    if (infer->parsed()) return cmd_infer(o);
    if (strain->parsed()) return cmd_strain(o);
    if (eval->parsed()) return cmd_eval(o);
    if (baseline->parsed()) return cmd_baseline(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}

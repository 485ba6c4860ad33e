// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Pass criterion numbers to run a subset. With --keep DIR the
// desk-scale dataset and models are written to DIR and reused on later runs;
// the recorded training times come from the run that trained them.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "support/gradient_suite.hpp"
#include "support/temp_dir.hpp"
#include "tagstrain/tagstrain.hpp"

using namespace tagstrain;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------- helpers

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  }
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb || fa.empty()) return false;
  for (const auto& f : fa) {
    if (slurp(a / f) != slurp(b / f)) return false;
  }
  return true;
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(TAGSTRAIN_CLI) + " " + args + " 2>&1";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Json last_json_line(const std::string& out) {
  const auto end = out.find_last_not_of('\n');
  const auto start = out.rfind('\n', end);
  return Json::parse(out.substr(start == std::string::npos ? 0 : start + 1, end + 1));
}

double strain_gap(const SliceStrain& a, const SliceStrain& b) {
  return std::max({std::abs(a.eps_R - b.eps_R), std::abs(a.eps_C - b.eps_C),
                   std::abs(a.eps_C_subendo - b.eps_C_subendo), std::abs(a.eps_C_midwall - b.eps_C_midwall),
                   std::abs(a.eps_C_subepi - b.eps_C_subepi)});
}

// ------------------------------------------------------- desk-scale state

// The 200-case dataset and both trained networks, built on first use.
class Desk {
 public:
  explicit Desk(fs::path dir) : dir_(std::move(dir)) {}

  const Manifest& data() {
    if (!manifest_) {
      const fs::path mf = dir_ / "data" / "manifest.json";
      const auto t0 = Clock::now();
      if (fs::exists(mf)) {
        manifest_ = read_manifest(mf.string());
      } else {
        const RunConfig c = config();
        manifest_ = generate_dataset((dir_ / "data").string(), 200, c.phantom, c.ranges, c.seed, c.splits,
                                     run_config_to_json(c));
      }
      std::printf("  desk dataset ready in %.1f s\n", since(t0));
      std::fflush(stdout);
    }
    return *manifest_;
  }

  std::string localizer_path() { return trained("localizer"); }
  std::string tracker_path() { return trained("tracker"); }
  double seconds(const std::string& net) { return read_json_file((dir_ / (net + ".time.json")).string()).at("seconds"); }

  static RunConfig config() {
    RunConfig c;
    c.seed = 11;
    return c;
  }

 private:
  std::string trained(const std::string& net) {
    const fs::path ck = dir_ / (net + ".ckpt");
    if (fs::exists(ck)) return ck.string();
    const Manifest& m = data();
    const RunConfig c = config();
    TrainOptions opt;
    opt.epochs = net == "localizer" ? 30 : 50;
    opt.seed = 1;
    opt.omega = c.omega;
    opt.preprocess = c.preprocess;
    opt.config = run_config_to_json(c);
    opt.on_metrics = [](const Json& line) {
      if (line.value("split", "") == "val") std::printf("  %s\n", line.dump().c_str());
      std::fflush(stdout);
    };
    const auto t0 = Clock::now();
    const TrainResult r = net == "localizer" ? train_localizer(m, c.localizer, opt) : train_tracker(m, c.tracker, opt);
    const double secs = since(t0);
    save_checkpoint(ck.string(), r.checkpoint);
    write_json_file((dir_ / (net + ".time.json")).string(), Json{{"seconds", secs}, {"epochs", opt.epochs}}, 1);
    return ck.string();
  }

  fs::path dir_;
  std::optional<Manifest> manifest_;
};

// ------------------------------------------------------------- criteria

Outcome strain_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    PhantomSpec s;
    s.annulus.center = {128 + 40 * (u(rng) - 0.5), 128 + 40 * (u(rng) - 0.5)};
    s.annulus.r_endo = 10 + 20 * u(rng);
    s.annulus.r_epi = s.annulus.r_endo + 4 + 12 * u(rng);
    s.annulus.theta_start = 2 * std::numbers::pi * u(rng);
    s.peak_endo_contraction = 0.4 * u(rng);
    s.peak_rotation = 0.4 * (u(rng) - 0.5);
    const PhantomCase pc = generate_case(s, false);
    const LandmarkGrid& ref = pc.truth_landmarks.frames[0];
    const double a = s.annulus.r_endo, b = s.annulus.r_epi;
    for (int t = 0; t < s.frames; ++t) {
      // Incompressible annulus: a material radius r0 moves to sqrt(a_t^2 + r0^2 - a^2).
      const double at = a * (1 - s.peak_endo_contraction * activation(t, s));
      auto r_of = [&](double r0) { return std::sqrt(at * at + r0 * r0 - a * a); };
      const LandmarkGrid& cur = pc.truth_landmarks.frames[t];
      const SliceStrain& got = pc.truth_strain.per_frame[t];
      std::array<double, kRings> ring{};
      double mean = 0.0;
      for (int k = 0; k < kRings; ++k) {
        const double r0 = a + k * (b - a) / (kRings - 1);
        const double stretch = r_of(r0) / r0;
        ring[k] = 0.5 * (stretch * stretch - 1.0);
        mean += ring[k] / kRings;
        worst = std::max(worst, std::abs(circ_strain(ref, cur, k) - ring[k]));
      }
      const double wall = r_of(b) - at;
      const double radial = 0.5 * (wall * wall / ((b - a) * (b - a)) - 1.0);
      worst = std::max({worst, std::abs(got.eps_R - radial), std::abs(got.eps_C - mean),
                        std::abs(got.eps_C_subendo - ring[kSubendoRing]),
                        std::abs(got.eps_C_midwall - ring[kMidwallRing]),
                        std::abs(got.eps_C_subepi - ring[kSubepiRing])});
    }
  }
  const double secs = since(t0);
  return {worst < 1e-9 && secs < 10.0, fmt("max |error| %.2e (limit 1e-9), %.2f s (limit 10 s)", worst, secs)};
}

Outcome invariance_suite() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(-1.0, 1.0), c(60, 200), r(10, 30);
  double rigid = 0.0, common = 0.0, pure = 0.0;
  for (int i = 0; i < 1000; ++i) {
    AnnulusSpec an;
    an.center = {c(rng), c(rng)};
    an.r_endo = r(rng);
    an.r_epi = an.r_endo + 6 + 6 * std::abs(u(rng));
    an.theta_start = 3 * std::abs(u(rng));
    LandmarkGrid ref = build_grid(an);
    for (auto& p : ref.points) p = p + Point2{0.8 * u(rng), 0.8 * u(rng)};
    LandmarkGrid cur = ref;
    for (auto& p : cur.points) p = p + Point2{1.5 * u(rng), 1.5 * u(rng)};
    const SliceStrain s0 = slice_strain(ref, cur);

    const Point2 pivot{100 * u(rng), 100 * u(rng)}, shift{30 * u(rng), 30 * u(rng)};
    const double angle = std::numbers::pi * u(rng);
    rigid = std::max(rigid, strain_gap(slice_strain(ref, rigid_transform(cur, pivot, angle, shift)), s0));
    rigid = std::max(rigid, strain_gap(slice_strain(rigid_transform(ref, pivot, angle, shift),
                                                    rigid_transform(cur, pivot, angle, shift)),
                                       s0));

    const double k = 0.25 + 3.0 * std::abs(u(rng));
    common = std::max(common, strain_gap(slice_strain(scale_about(ref, pivot, k), scale_about(cur, pivot, k)), s0));

    const double expected = 0.5 * (k * k - 1.0);
    const LandmarkGrid scaled = scale_about(ref, pivot, k);
    const SliceStrain ss = slice_strain(ref, scaled);
    for (int ring = 0; ring < kRings; ++ring) pure = std::max(pure, std::abs(circ_strain(ref, scaled, ring) - expected));
    pure = std::max({pure, std::abs(ss.eps_C - expected), std::abs(ss.eps_C_midwall - expected),
                     std::abs(ss.eps_R - expected)});
  }
  const bool ok = rigid < 1e-9 && common < 1e-9 && pure < 1e-9;
  return {ok, fmt("1000 pairs: rigid %.2e, common scaling %.2e, pure scaling %.2e (limit 1e-9)", rigid, common, pure)};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  const auto worst = gradsuite::run(20);
  const double secs = since(t0);
  const std::vector<std::string> required{"conv2d", "maxpool2d", "batchnorm2d.train", "batchnorm2d.eval", "linear",
                                          "relu", "leaky_relu", "sigmoid", "tanh", "dropout", "lstm",
                                          "bbox_mse_loss", "composite_tracking_loss"};
  double max_err = 0.0;
  std::string worst_name, missing;
  for (const auto& name : required) {
    auto it = worst.find(name);
    if (it == worst.end()) {
      missing += " " + name;
      continue;
    }
    if (it->second >= max_err) {
      max_err = it->second;
      worst_name = name;
    }
  }
  const bool ok = missing.empty() && max_err < 1e-4 && secs < 60.0;
  return {ok, fmt("%zu checks x 20 shapes, worst %s %.2e (limit 1e-4), %.1f s (limit 60 s)%s", required.size(),
                  worst_name.c_str(), max_err, secs, missing.empty() ? "" : (" missing:" + missing).c_str())};
}

Outcome localizer_desk(Desk& desk) {
  const std::string path = desk.localizer_path();
  const double secs = desk.seconds("localizer");
  const Checkpoint ck = load_checkpoint(path);
  Localizer net = localizer_from_checkpoint(ck);
  const PreprocConfig pre = checkpoint_preprocess(ck);
  const auto val = localizer_samples(desk.data().split("val"), pre, net.config().input_size);
  const Json m = localizer_metrics(evaluate_localizer(net, val, pre));
  const double mean = m.at("mean_iou");
  const int bad = m.at("n_iou_below_0.5_uncontained");
  const bool ok = mean >= 0.85 && bad == 0 && secs <= 600.0;
  return {ok, fmt("val n=%zu mean IoU %.4f (min 0.85), min %.4f, IoU<0.5 uncontained %d (max 0), 30 epochs in %.0f s "
                  "(limit 600 s)",
                  val.size(), mean, m.at("min_iou").get<double>(), bad, secs)};
}

Outcome tracker_desk(Desk& desk, const fs::path& work) {
  const std::string path = desk.tracker_path();
  const double secs = desk.seconds("tracker");
  const Checkpoint ck = load_checkpoint(path);
  Tracker net = tracker_from_checkpoint(ck);
  const PreprocConfig pre = checkpoint_preprocess(ck);
  const auto test = tracker_samples(desk.data().split("test"), pre, net.config());
  const TrackerEvaluation ev = evaluate_tracker(net, test, Desk::config().omega);
  const MeanSd mid = mean_sd(ev.es_midwall_error);
  const double radial = mean_sd(ev.es_radial_error).mean;
  const bool desk_ok = std::abs(mid.mean) <= 0.01 && mid.sd <= 0.05 && std::abs(radial) <= 0.03 && secs <= 1800.0;

  // Overfit smoke on a single standard case.
  const fs::path one = work / "overfit_one";
  const RunConfig c = Desk::config();
  const Manifest m = generate_dataset(one.string(), 1, c.phantom, PhantomRanges{}, 3);
  TrainOptions opt;
  opt.epochs = 200;
  opt.seed = 3;
  opt.preprocess = c.preprocess;
  const TrainResult r = train_tracker(m, c.tracker, opt);
  const double ratio = r.step_losses.back() / r.step_losses.front();
  const bool ok = desk_ok && ratio < 0.01;
  return {ok, fmt("held-out n=%zu ES midwall eps_C bias %+.4f (|.|<=0.01) sd %.4f (<=0.05), eps_R bias %+.4f "
                  "(|.|<=0.03), 50 epochs in %.0f s (limit 1800 s); overfit-one final/initial %.2e (limit 1e-2)",
                  test.size(), mid.mean, mid.sd, radial, secs, ratio)};
}

Outcome composite_loss_shift() {
  const LandmarkSequence truth = phantom_landmarks(PhantomSpec{});
  LandmarkSequence pred = truth;
  for (auto& g : pred.frames) g = translate(g, {3.0, 4.0});
  const nn::LossBreakdown b = nn::composite_tracking_loss(pred, truth, 1.0);
  const bool ok = std::abs(b.total - 25.0) <= 1e-6 && std::abs(b.mse_position - 25.0) <= 1e-6 &&
                  std::abs(b.radial_term) <= 1e-6 && std::abs(b.circ_term) <= 1e-6;
  return {ok, fmt("total %.9f, position %.9f, radial %.1e, circumferential %.1e (tolerance 1e-6)", b.total,
                  b.mse_position, b.radial_term, b.circ_term)};
}

// Frame t is frame 0 of `s` moved by t * (dx, dy) pixels.
Cine shifted_cine(const PhantomSpec& s, int frames, double dx, double dy) {
  Cine c;
  for (int t = 0; t < frames; ++t) {
    Image img(s.image_w, s.image_h);
    for (int y = 0; y < s.image_h; ++y) {
      for (int x = 0; x < s.image_w; ++x) img.at(x, y) = intensity_at({x + 0.5 - t * dx, y + 0.5 - t * dy}, 0, s);
    }
    c.frames.push_back(img);
  }
  return c;
}

Outcome baseline_registration(Desk& desk) {
  PhantomSpec still;
  still.image_w = still.image_h = 128;
  still.annulus.center = {64, 64};
  still.peak_endo_contraction = 0.0;
  still.fade_rate = 0.0;
  const LandmarkGrid g0 = build_grid(still.annulus);

  SSDConfig integer;
  integer.subpixel = false;
  const SSDTrack exact = track_ssd(shifted_cine(still, 4, 2.0, -1.0), g0, integer);
  double int_err = 0.0;
  for (int t = 0; t < 4; ++t) {
    for (int i = 0; i < kLandmarks; ++i) {
      const Point2 want = g0.points[i] + Point2{2.0 * t, -1.0 * t};
      int_err = std::max(int_err, distance(exact.sequence.frames[t].points[i], want));
    }
  }

  // Worst single landmark; the mean is reported alongside.
  const SSDTrack half = track_ssd(shifted_cine(still, 2, 0.5, 0.0), g0);
  double half_err = 0.0, half_mean = 0.0;
  for (int i = 0; i < kLandmarks; ++i) {
    const Point2 d = half.sequence.frames[1].points[i] - half.sequence.frames[0].points[i];
    half_err = std::max(half_err, std::abs(d.x - 0.5) + std::abs(d.y));
    half_mean += d.x / kLandmarks;
  }

  // Mild-contraction noise-free cases from the desk distribution, tracked by
  // the baseline seeded with the true ED grid and by the learned pipeline.
  PhantomRanges ranges = desk_ranges();
  ranges.noise_sigma = {0.0, 0.0};
  const RunConfig c = Desk::config();
  const auto specs = sample_dataset_specs(20, c.phantom, ranges, 303);
  Models models = load_models(desk.localizer_path(), desk.tracker_path());
  double base_worst = 0.0, base_sum = 0.0, learned_sum = 0.0;
  for (const PhantomSpec& s : specs) {
    const PhantomCase pc = generate_case(s);
    const int es = pc.truth_strain.es_frame;
    const SliceStrain& truth = pc.truth_strain.per_frame[es];
    const SliceStrain b = strain_curve(track_ssd(pc.cine, pc.truth_landmarks.frames[0], c.baseline).sequence).per_frame[es];
    const SliceStrain l = full_pipeline(models, pc.cine).strain.per_frame[es];
    base_worst = std::max({base_worst, std::abs(b.eps_C - truth.eps_C), std::abs(b.eps_C_midwall - truth.eps_C_midwall)});
    base_sum += std::abs(b.eps_C_midwall - truth.eps_C_midwall);
    learned_sum += std::abs(l.eps_C_midwall - truth.eps_C_midwall);
  }
  const double n = static_cast<double>(specs.size());
  const bool ok = int_err == 0.0 && half_err <= 0.1 && base_worst <= 0.05 && learned_sum <= base_sum;
  return {ok, fmt("integer stage error %.3g px (must be 0), half-pixel error %.3f px (<=0.1, mean shift %.3f), baseline worst ES |eps_C "
                  "error| %.4f (<=0.05), mean |midwall error| learned %.4f <= baseline %.4f over %d cases",
                  int_err, half_err, half_mean, base_worst, learned_sum / n, base_sum / n, static_cast<int>(n))};
}

Outcome statistics_oracles() {
  // Three-pair example against a hand computation.
  const AgreementResult ba = bland_altman({{-0.19, -0.20}, {-0.20, -0.18}, {-0.21, -0.21}});
  const double bias = -0.01 / 3.0;
  const double sd = 0.01 * std::sqrt((16.0 / 9.0 + 25.0 / 9.0 + 1.0 / 9.0) / 2.0);
  const double ba_err = std::max({std::abs(ba.bias - bias), std::abs(ba.precision - sd),
                                  std::abs(ba.loa_low - (bias - 1.96 * sd)), std::abs(ba.loa_high - (bias + 1.96 * sd))});
  const double printed = std::max({std::abs(ba.bias + 0.003333), std::abs(ba.precision - 0.015275),
                                   std::abs(ba.loa_low + 0.033272), std::abs(ba.loa_high - 0.026605)});

  const TTestResult w = welch_t_test({-0.19, -0.20, -0.21}, {-0.17, -0.18, -0.16});
  const double welch_err = std::max(std::abs(w.t + 3.6742), std::abs(w.df - 4.0));

  // Simpson integration of the t density.
  auto quadrature_p = [](double t, int df) {
    const double nu = df;
    const double k = std::exp(std::lgamma(0.5 * (nu + 1)) - std::lgamma(0.5 * nu)) / std::sqrt(nu * std::numbers::pi);
    auto f = [&](double x) { return k * std::pow(1.0 + x * x / nu, -0.5 * (nu + 1)); };
    const double b = std::abs(t);
    const int n = 4000;
    const double h = b / n;
    double s = f(0) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return 1.0 - 2.0 * s * h / 3.0;
  };
  double p_err = 0.0;
  for (int df = 1; df <= 200; ++df) {
    for (double t : {0.05, 0.5, 1.0, 1.96, 2.5, 4.0, 6.0, 10.0}) {
      p_err = std::max(p_err, std::abs(t_two_sided_p(t, df) - quadrature_p(t, df)));
    }
  }
  const TTestResult one = t_test_one_sample({1.0, 2.0, 3.0});
  const double one_err = std::max(std::abs(one.t - 2.0 * std::sqrt(3.0)),
                                  std::abs(one.p - (1.0 - one.t / std::sqrt(one.t * one.t + 2.0))));

  const bool ok = ba_err <= 1e-6 && welch_err <= 1e-4 && p_err <= 1e-6 && one_err <= 1e-6;
  return {ok, fmt("Bland-Altman %.1e (<=1e-6; published rounded digits within %.1e), Welch t %.5f df %.4f (%.1e, "
                  "<=1e-4), one-sample %.1e, t p-values vs quadrature df 1..200 %.1e (<=1e-6)",
                  ba_err, printed, w.t, w.df, welch_err, one_err, p_err)};
}

Outcome cli_determinism(const fs::path& work) {
  const fs::path dir = work / "cli";
  fs::create_directories(dir);
  RunConfig c;
  c.phantom.image_w = c.phantom.image_h = 96;
  c.phantom.annulus.center = {48, 48};
  c.ranges = PhantomRanges{};
  c.ranges.contraction = {-0.03, 0.03};
  c.preprocess.pad_to = 96;
  const std::string cfg = (dir / "config.json").string();
  write_json_file(cfg, run_config_to_json(c), 1);
  auto p = [&](const std::string& leaf) { return (dir / leaf).string(); };

  std::string failed;
  auto step = [&](const std::string& args) {
    const CliResult r = cli(args);
    if (r.code != 0) failed += " [" + args + " -> exit " + std::to_string(r.code) + "]";
  };
  for (const char* run : {"a", "b"}) {
    const std::string tag = run;
    step("phantom gen --n 6 --seed 7 --out " + p("ds_" + tag) + " --config " + cfg);
    const std::string common = " --data " + p("ds_a/manifest.json") + " --epochs 2 --seed 5 --config " + cfg;
    step("train localizer --out " + p("loc_" + tag + ".ckpt") + common);
    step("train tracker --out " + p("trk_" + tag + ".ckpt") + common);
    step("infer --localizer " + p("loc_a.ckpt") + " --tracker " + p("trk_a.ckpt") + " --cine " +
         p("ds_a/cases/case_00005.cine") + " --out " + p("infer_" + tag + ".landmarks.json"));
  }
  if (!failed.empty()) return {false, "command failed:" + failed};
  auto same = [&](const std::string& a, const std::string& b) {
    const std::string x = slurp(p(a));
    return !x.empty() && x == slurp(p(b));
  };
  const bool gen = same_tree(dir / "ds_a", dir / "ds_b");
  const bool loc = same("loc_a.ckpt", "loc_b.ckpt") && same("loc_a.ckpt.metrics.jsonl", "loc_b.ckpt.metrics.jsonl");
  const bool trk = same("trk_a.ckpt", "trk_b.ckpt") && same("trk_a.ckpt.metrics.jsonl", "trk_b.ckpt.metrics.jsonl");
  const bool inf = same("infer_a.landmarks.json", "infer_b.landmarks.json");
  auto word = [](bool v) { return v ? "identical" : "DIFFERENT"; };
  return {gen && loc && trk && inf, fmt("phantom gen %s, train localizer %s, train tracker %s, infer %s", word(gen),
                                        word(loc), word(trk), word(inf))};
}

Outcome adam_schedules() {
  const nn::LrSchedule loc = nn::LrSchedule::localizer();
  const nn::LrSchedule trk = nn::LrSchedule::tracker();
  const double root = std::sqrt(2.0);
  double err = 0.0;
  for (int e = 0; e < 100; ++e) {
    const int loc_events = e < 15 ? 0 : (e - 10) / 5;
    const int trk_events = e / 10;
    err = std::max(err, std::abs(loc.lr(e) - 1e-3 / std::pow(root, loc_events)) / 1e-3);
    err = std::max(err, std::abs(trk.lr(e) - 1e-4 / std::pow(root, trk_events)) / 1e-4);
  }
  bool ok = err < 1e-12;
  for (int e = 0; e <= 14; ++e) ok = ok && loc.lr(e) == 1e-3;
  ok = ok && std::abs(loc.lr(15) - 7.071e-4) < 5e-8 && std::abs(loc.lr(20) - 5e-4) < 1e-15;
  for (int e = 0; e < 10; ++e) ok = ok && trk.lr(e) == 1e-4;
  ok = ok && trk.lr(9) > trk.lr(10) && trk.lr(19) > trk.lr(20);
  return {ok, fmt("localizer lr(14) %.4g lr(15) %.4g lr(20) %.4g; tracker lr(9) %.4g lr(10) %.4g lr(20) %.4g; rule "
                  "deviation over epochs 0..99 %.1e",
                  loc.lr(14), loc.lr(15), loc.lr(20), trk.lr(9), trk.lr(10), trk.lr(20), err)};
}

Outcome throughput(Desk& desk, const fs::path& work) {
  const ManifestEntry& e = *desk.data().split("test").front();
  const std::string out = (work / "throughput.landmarks.json").string();
  const CliResult r = cli("infer --force --localizer " + desk.localizer_path() + " --tracker " + desk.tracker_path() +
                          " --cine " + e.cine_path + " --out " + out);
  if (r.code != 0) return {false, "infer exited with " + std::to_string(r.code) + ": " + r.out};
  const Json j = last_json_line(r.out);
  if (!j.contains("frames_per_second")) return {false, "no frames_per_second in infer output"};
  const double fps = j.at("frames_per_second");
  return {fps > 0.0 && std::isfinite(fps),
          fmt("infer reports %.1f frames/s end to end, %.1f frames/s tracking", fps,
              j.value("tracking_frames_per_second", 0.0))};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  std::optional<fs::path> keep;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--keep" && i + 1 < argc) {
      keep = fs::absolute(argv[++i]);
    } else {
      wanted.insert(std::stoi(a));
    }
  }
  std::optional<TempDir> scratch;
  if (!keep) scratch.emplace("tagstrain_acceptance");
  const fs::path work = keep ? *keep : scratch->path();
  fs::create_directories(work);
  Desk desk(work / "desk");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"strain oracle exactness", strain_oracle},
      {"rigid and scale invariance", invariance_suite},
      {"gradient checks", gradient_checks},
      {"localizer desk-scale training", [&] { return localizer_desk(desk); }},
      {"tracker desk-scale training", [&] { return tracker_desk(desk, work); }},
      {"composite loss structure", composite_loss_shift},
      {"baseline registration", [&] { return baseline_registration(desk); }},
      {"statistics oracles", statistics_oracles},
      {"end-to-end determinism", [&] { return cli_determinism(work); }},
      {"Adam schedules", adam_schedules},
      {"throughput reporting", [&] { return throughput(desk, work); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

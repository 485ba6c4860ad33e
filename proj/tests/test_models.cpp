#include <gtest/gtest.h>

#include <filesystem>

#include "support/temp_dir.hpp"
#include "tagstrain/models/pipeline.hpp"
#include "tagstrain/models/training.hpp"

using namespace tagstrain;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.image_w = s.image_h = 128;
  s.annulus.center = {64, 64};
  return s;
}

PreprocConfig small_preprocess() {
  PreprocConfig p;
  p.pad_to = 128;
  return p;
}

PhantomRanges some_ranges() {
  PhantomRanges r;
  r.center_x = r.center_y = {-10, 10};
  r.r_endo = {-3, 3};
  r.contraction = {-0.04, 0.04};
  return r;
}

Manifest small_dataset(const TempDir& dir, int n, std::uint64_t seed = 5) {
  return generate_dataset(dir.str(), n, small_spec(), some_ranges(), seed);
}

LocalizerConfig small_localizer() {
  LocalizerConfig c;
  c.conv_filters = {8, 8, 16, 16};
  c.fc_widths = {32, 4};
  c.batch_size = 4;
  return c;
}

TrackerConfig small_tracker() {
  TrackerConfig c;
  c.conv_filters = {4, 8, 8, 8};
  c.feature_dim = 32;
  c.lstm_hidden = 32;
  c.batch_size = 2;
  return c;
}

RTensor random_input(nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<float> v(nn::shape_numel(shape));
  for (float& x : v) x = static_cast<float>(d(rng));
  return RTensor::from(std::move(shape), std::move(v));
}

bool same_values(const RTensor& a, const RTensor& b) {
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

}  // namespace

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
  LocalizerConfig l = small_localizer();
  l.dropout = 0.3;
  EXPECT_EQ(localizer_config_to_json(localizer_config_from_json(localizer_config_to_json(l), "l")),
            localizer_config_to_json(l));
  TrackerConfig t = small_tracker();
  t.lstm_activation = nn::CellActivation::kRelu;
  EXPECT_EQ(tracker_config_to_json(tracker_config_from_json(tracker_config_to_json(t), "t")),
            tracker_config_to_json(t));
  try {
    tracker_config_from_json(Json{{"schedule", {{"base_lr", 1e-3}, {"decay", 2}}}}, "tracker");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tracker.schedule.decay"), std::string::npos) << e.what();
  }
  EXPECT_THROW(localizer_config_from_json(Json{{"fc_widths", {256, 3}}}, "l"), ConfigError);
  EXPECT_THROW(localizer_config_from_json(Json{{"input_size", 60}}, "l"), ConfigError);
}

TEST(Localizer, ShapeInitialBoxAndEvalDeterminism) {
  Localizer net(small_localizer(), 3);
  const RTensor x = random_input({3, 1, 64, 64}, 1);
  const RTensor a = net.predict(x);
  const RTensor b = net.predict(x);
  ASSERT_EQ(a.shape(), (nn::Shape{3, 4}));
  EXPECT_TRUE(same_values(a, b));
  // A blank image gives all-zero features, so the head outputs its bias.
  const RTensor blank = net.predict(RTensor::zeros({1, 1, 64, 64}));
  for (int k = 0; k < 4; ++k) EXPECT_FLOAT_EQ(blank.data()[k], kInitialBox[k]);
  EXPECT_THROW(net.predict(random_input({1, 1, 32, 32}, 2)), ShapeError);
}

TEST(Tracker, OutputShapeAndFrameDependence) {
  Tracker net(small_tracker(), 4);
  RTensor x = random_input({1, 20, 64, 64}, 3);
  const RTensor a = net.predict(x);
  ASSERT_EQ(a.shape(), (nn::Shape{1, 20, nn::kCoordsPerFrame}));
  EXPECT_TRUE(same_values(a, net.predict(x)));

  RTensor z = x.detach();
  std::fill(z.data().end() - 64 * 64, z.data().end(), 0.0f);
  const RTensor b = net.predict(z);
  const std::size_t last = 19 * nn::kCoordsPerFrame;
  bool changed = false;
  for (std::size_t i = last; i < a.numel(); ++i) changed |= a.data()[i] != b.data()[i];
  EXPECT_TRUE(changed) << "zeroing the last frame must change the last frame's output";
  // The recurrence runs forward in time, so earlier frames are unaffected.
  for (std::size_t i = 0; i < last; ++i) ASSERT_EQ(a.data()[i], b.data()[i]);

  EXPECT_THROW(net.predict(random_input({1, 19, 64, 64}, 2)), ShapeError);
}

TEST(Tracker, HeadStartsAtTemplateAnnulus) {
  const auto tmpl = template_landmarks(0.6);
  EXPECT_NEAR(tmpl[2 * landmark_index(kRings - 1, 0)], 0.5 - 0.3125, 1e-6);  // spoke 0 points along -x
  EXPECT_NEAR(tmpl[2 * landmark_index(0, 0)], 0.5 - 0.3125 * 2.0 / 3.0, 1e-6);
}

TEST(Checkpoint, RoundTripIsByteIdenticalAndPredictsIdentically) {
  TempDir dir("tagstrain_ckpt_test");
  Tracker net(small_tracker(), 9);
  const RTensor x = random_input({1, 20, 64, 64}, 5);
  // Move the running statistics away from their initial values.
  net.forward(x, true);
  const RTensor before = net.predict(x);

  const std::string p1 = dir.str("a.ckpt"), p2 = dir.str("b.ckpt");
  save_checkpoint(p1, make_checkpoint(net, small_preprocess(), 3, 9, 12, Json{{"omega", 1.0}}));
  const Checkpoint ck = load_checkpoint(p1);
  EXPECT_EQ(ck.kind, "tracker");
  EXPECT_EQ(ck.epoch, 3);
  EXPECT_EQ(ck.adam_steps, 12);
  save_checkpoint(p2, ck);
  EXPECT_EQ(read_text_file(p1), read_text_file(p2));
  EXPECT_EQ(read_text_file(p1).substr(0, 13), "TAGSTRAINCKPT");

  Tracker loaded = tracker_from_checkpoint(ck);
  EXPECT_TRUE(same_values(before, loaded.predict(x)));
  EXPECT_THROW(localizer_from_checkpoint(ck), ConfigError);

  std::string bytes = read_text_file(p1);
  write_text_file(p2, bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(load_checkpoint(p2), IoError);
  write_text_file(p2, bytes + "x");
  EXPECT_THROW(load_checkpoint(p2), IoError);
  bytes[3] = 'X';
  write_text_file(p2, bytes);
  EXPECT_THROW(load_checkpoint(p2), IoError);

  Checkpoint wrong = ck;
  wrong.params[0].shape = {1};
  wrong.params[0].values = {0.0f};
  Tracker other(small_tracker(), 1);
  EXPECT_THROW(import_params(other.params(), wrong.params), ShapeError);
}

TEST(Training, LocalizerTargetIsTheTightBox) {
  TempDir dir("tagstrain_loc_target");
  const Manifest m = small_dataset(dir, 3);
  const PreprocConfig pre = small_preprocess();
  const auto samples = localizer_samples(m.split("train"), pre, 64);
  ASSERT_FALSE(samples.empty());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const BoundingBox tight = m.split("train")[i]->bbox;
    const auto t = samples[i].target;
    EXPECT_FLOAT_EQ(t[0], static_cast<float>(tight.x_min / pre.pad_to));
    EXPECT_FLOAT_EQ(t[2], static_cast<float>(tight.x_max / pre.pad_to));
    const BoundingBox back = denormalized_box(t.data(), samples[i].input, pre.pad_to);
    EXPECT_NEAR(back.x_min, tight.x_min, 1e-4);
    EXPECT_NEAR(back.y_max, tight.y_max, 1e-4);
  }
}

TEST(Training, ExpandedRegionExample) {
  PreprocConfig pre;
  const BoundingBox r = expanded_roi({50, 50, 150, 150}, 256, 256, pre);
  EXPECT_DOUBLE_EQ(r.x_min, 20);
  EXPECT_DOUBLE_EQ(r.y_min, 20);
  EXPECT_DOUBLE_EQ(r.x_max, 180);
  EXPECT_DOUBLE_EQ(r.y_max, 180);
  // A perfect prediction overlaps the truth completely before expansion.
  EXPECT_DOUBLE_EQ(iou(BoundingBox{50, 50, 150, 150}, BoundingBox{50, 50, 150, 150}), 1.0);
}

TEST(Training, EmptySplitAndNonFiniteLoss) {
  Manifest empty;
  TrainOptions opt;
  opt.epochs = 1;
  EXPECT_THROW(train_localizer(empty, small_localizer(), opt), DomainError);
  EXPECT_THROW(train_tracker(empty, small_tracker(), opt), DomainError);
  try {
    detail::check_finite(std::nan(""), 4, 17);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 4, step 17"), std::string::npos);
  }
}

TEST(Training, DeterministicForFixedSeed) {
  TempDir dir("tagstrain_train_det");
  const Manifest m = small_dataset(dir, 6);
  TrainOptions opt;
  opt.epochs = 2;
  opt.seed = 21;
  opt.preprocess = small_preprocess();
  const TrainResult a = train_localizer(m, small_localizer(), opt);
  const TrainResult b = train_localizer(m, small_localizer(), opt);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.checkpoint.header(), b.checkpoint.header());
  ASSERT_EQ(a.metrics.size(), 4u);  // train + val per epoch
  EXPECT_EQ(a.metrics[1].at("split"), "val");
  EXPECT_TRUE(a.metrics[1].contains("mean_iou"));

  const TrainResult c = train_tracker(m, small_tracker(), opt);
  const TrainResult d = train_tracker(m, small_tracker(), opt);
  EXPECT_EQ(c.metrics, d.metrics);
  EXPECT_TRUE(c.metrics[1].contains("es_eps_C_midwall_bias"));
  EXPECT_TRUE(c.metrics[1].contains("rms_mm_es"));
  opt.seed = 22;
  EXPECT_NE(train_tracker(m, small_tracker(), opt).metrics, c.metrics);
}

TEST(Training, LocalizerOverfitsOneCase) {
  TempDir dir("tagstrain_loc_overfit");
  const Manifest m = small_dataset(dir, 1);
  TrainOptions opt;
  opt.epochs = 200;
  opt.seed = 2;
  opt.preprocess = small_preprocess();
  LocalizerConfig cfg;
  cfg.schedule.period_epochs = 0;  // one step per epoch; the default decay would stall it
  cfg.dropout = 0.0;               // dropout noise alone sits near 1% of the start
  const TrainResult r = train_localizer(m, cfg, opt);
  ASSERT_EQ(r.step_losses.size(), 200u);
  EXPECT_LT(r.step_losses.back(), r.step_losses.front());
  EXPECT_LT(r.step_losses.back(), 0.01 * r.step_losses.front());
}

TEST(Training, TrackerOverfitsOneCase) {
  TempDir dir("tagstrain_trk_overfit");
  const Manifest m = small_dataset(dir, 1);
  TrainOptions opt;
  opt.epochs = 200;
  opt.seed = 3;
  opt.preprocess = small_preprocess();
  const TrainResult r = train_tracker(m, TrackerConfig{}, opt);
  ASSERT_EQ(r.step_losses.size(), 200u);
  EXPECT_LT(r.step_losses.back(), 0.01 * r.step_losses.front())
      << "initial " << r.step_losses.front() << " final " << r.step_losses.back();
}

TEST(Pipeline, DeterministicAndStageErrors) {
  TempDir dir("tagstrain_pipeline");
  const Manifest m = small_dataset(dir, 4);
  TrainOptions opt;
  opt.epochs = 1;
  opt.preprocess = small_preprocess();
  save_checkpoint(dir.str("loc.ckpt"), train_localizer(m, small_localizer(), opt).checkpoint);
  save_checkpoint(dir.str("trk.ckpt"), train_tracker(m, small_tracker(), opt).checkpoint);
  Models models = load_models(dir.str("loc.ckpt"), dir.str("trk.ckpt"));

  const Cine cine = read_cine(m.entries[0].cine_path);
  const PipelineResult a = full_pipeline(models, cine);
  const PipelineResult b = full_pipeline(models, cine);
  ASSERT_EQ(a.landmarks.size(), cine.frame_count());
  for (int t = 0; t < a.landmarks.size(); ++t) {
    for (int i = 0; i < kLandmarks; ++i) {
      ASSERT_EQ(a.landmarks.frames[t].points[i].x, b.landmarks.frames[t].points[i].x);
      ASSERT_EQ(a.landmarks.frames[t].points[i].y, b.landmarks.frames[t].points[i].y);
    }
  }
  EXPECT_EQ(a.strain.per_frame.size(), a.landmarks.frames.size());

  Cine one = cine;
  one.frames.resize(1);
  try {
    full_pipeline(models, one);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "strain");
  }
}

TEST(Pipeline, DegenerateBoxFallsBackToFullImage) {
  Localizer net(small_localizer(), 1);
  auto& items = net.params().items();
  for (auto& e : items) {
    if (e.name == "fc1.weight") std::fill(e.tensor.data().begin(), e.tensor.data().end(), 0.0f);
    if (e.name == "fc1.bias") {
      const float v[4] = {0.6f, 0.6f, 0.4f, 0.4f};
      std::copy(v, v + 4, e.tensor.data().begin());
    }
  }
  Cine c;
  c.frames.emplace_back(100, 80, 1.0);
  const LocalizeResult r = localize(net, small_preprocess(), c);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.roi.x_max, 100);
  EXPECT_EQ(r.roi.y_max, 80);
}

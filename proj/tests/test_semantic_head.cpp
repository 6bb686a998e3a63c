#include <gtest/gtest.h>

#include "svt/grad_check.hpp"
#include "svt/semantic_head.hpp"
#include "svt/synthetic.hpp"
#include "test_util.hpp"

namespace {

svt::TrainConfig tiny_train_config() {
  svt::TrainConfig t;
  t.preprocess.resize_short = 32;
  t.preprocess.crop_height = t.preprocess.crop_width = 32;
  t.batch = 3;
  return t;
}

std::vector<svt::LabeledVideo> synthetic_videos(std::size_t per_class, std::uint64_t seed) {
  auto ds = svt::generate_synthetic_dataset(svt::SyntheticSpec{}, per_class, seed);
  std::vector<svt::LabeledVideo> out;
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    out.push_back({ds.manifest.entries[i].video_id, ds.manifest.entries[i].class_id, ds.videos[i]});
  }
  return out;
}

std::vector<double> flat_parameters(const svt::SvtModel<double>& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST(SemanticLoss, Examples) {
  svt::Tensor<double> f({1, 2}, {1, 0}), phi({1, 2}, {0, 1});
  EXPECT_DOUBLE_EQ(svt::semantic_loss(f, phi).item(), 2.0);
  EXPECT_DOUBLE_EQ(svt::semantic_loss(f, f).item(), 0.0);
  EXPECT_DOUBLE_EQ(svt::squared_error(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 2.0);
  EXPECT_THROW(svt::semantic_loss(f, svt::Tensor<double>({2, 1}, {0, 1})), svt::ShapeError);
}

TEST(SemanticLoss, MatchesElementwiseLoop) {
  svt::Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + rng.index(4), d = 1 + rng.index(10);
    auto a = testutil::random_values<double>(B * d, rng), b = testutil::random_values<double>(B * d, rng);
    double ref = 0.0;
    for (std::size_t i = 0; i < B * d; ++i) ref += (a[i] - b[i]) * (a[i] - b[i]);
    ref /= static_cast<double>(B);
    EXPECT_NEAR(svt::semantic_loss(svt::Tensor<double>({B, d}, a), svt::Tensor<double>({B, d}, b)).item(), ref, 1e-12);
  }
}

TEST(SemanticLoss, ZeroExactlyWhenEqual) {
  svt::Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    auto f = testutil::random_values<double>(6, rng);
    auto phi = f;
    EXPECT_EQ(svt::squared_error(f, phi), 0.0);
    phi[rng.index(6)] += rng.uniform(1e-6, 1.0);
    EXPECT_GT(svt::squared_error(f, phi), 0.0);
  }
}

TEST(Classify, Examples) {
  svt::SemanticSpace s(2);
  s.add({1}, {1, 0});
  s.add({2}, {0, 1});
  s.add({3}, {1, 1});
  EXPECT_EQ(svt::classify(std::vector<double>{1, 1}, s), svt::ClassId{3});
  EXPECT_EQ(svt::classify(std::vector<double>{0, 5}, s), svt::ClassId{2});
  std::vector<svt::ClassId> cands = {{1}, {2}};
  // equidistant from 1 and 2: the smaller id wins
  EXPECT_EQ(svt::classify(std::vector<double>{1, 1}, s, &cands), svt::ClassId{1});
  EXPECT_THROW(svt::classify(std::vector<double>{0, 0}, s), svt::DataError);
  try {
    svt::classify(std::vector<double>{1, 0, 0}, s);
    FAIL();
  } catch (const svt::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension 3"), std::string::npos);
  }
}

TEST(Classify, MatchesExhaustiveScan) {
  svt::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    svt::SemanticSpace s(4);
    for (std::int64_t c = 0; c < 5; ++c) s.add({c * 3 + 1}, testutil::random_values<double>(4, rng));
    auto f = testutil::random_values<double>(4, rng);
    double best = -2.0;
    svt::ClassId arg{};
    for (const auto& e : s.entries()) {
      double fu = 0, ff = 0, uu = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        fu += f[i] * e.vector[i];
        ff += f[i] * f[i];
        uu += e.vector[i] * e.vector[i];
      }
      const double sim = fu / std::sqrt(ff * uu);
      if (sim > best) {
        best = sim;
        arg = e.id;
      }
    }
    EXPECT_EQ(svt::classify(f, s), arg);
  }
}

TEST(Classify, InvariantToPositiveRescaling) {
  svt::Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.index(8), d = 2 + rng.index(8);
    svt::SemanticSpace s(d), scaled(d);
    for (std::size_t c = 0; c < k; ++c) {
      auto v = testutil::random_values<double>(d, rng);
      s.add({static_cast<std::int64_t>(c)}, v);
      const double a = std::exp(rng.uniform(-5, 5));
      for (auto& x : v) x *= a;
      scaled.add({static_cast<std::int64_t>(c)}, v);
    }
    auto f = testutil::random_values<double>(d, rng);
    auto g = f;
    const double b = std::exp(rng.uniform(-5, 5));
    for (auto& x : g) x *= b;
    ASSERT_EQ(svt::classify(f, s), svt::classify(g, scaled));
  }
}

TEST(EvalClips, SegmentsCoverTheVideo) {
  EXPECT_EQ(svt::eval_clip_indices(100, 8, 1)[0], svt::sample_clip(100, 8, svt::Mode::eval));
  auto clips = svt::eval_clip_indices(90, 4, 3);
  ASSERT_EQ(clips.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    for (auto i : clips[c]) {
      EXPECT_GE(i, c * 30);
      EXPECT_LT(i, (c + 1) * 30);
    }
  }
  EXPECT_THROW(svt::eval_clip_indices(10, 4, 0), svt::ConfigError);
}

TEST(EmbedVideoClips, SingleClipMatchesForward) {
  auto cfg = testutil::tiny_config();
  auto m = svt::SvtModel<double>::init(cfg, 1);
  testutil::perturb(m, 1);
  auto videos = synthetic_videos(1, 3);
  auto pre = tiny_train_config().preprocess;
  auto e = svt::embed_video_clips(m, videos[0].video, pre);
  auto px = svt::preprocess<double>(videos[0].video, svt::sample_clip(videos[0].video.frames, 4, svt::Mode::eval), pre,
                                    svt::Mode::eval);
  auto out = svt::forward(m, svt::Tensor<double>({1, 4, 32, 32, 3}, px));
  for (std::size_t i = 0; i < cfg.sem_dim; ++i) EXPECT_EQ(e.embedding[i], out.embedding[i]);
  for (std::size_t i = 0; i < cfg.dim; ++i) EXPECT_EQ(e.summary[i], out.summary[i]);
  EXPECT_EQ(svt::embed_video_clips(m, videos[0].video, pre).embedding, e.embedding);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  auto cfg = testutil::tiny_config();
  auto m = svt::SvtModel<double>::init(cfg, 2);
  const auto before = flat_parameters(m);
  auto t = tiny_train_config();
  t.lr = 0.0;
  t.epochs = 4;
  auto trace = svt::train(m, synthetic_videos(2, 1), svt::synthetic_class_space(3, cfg.sem_dim, 1), t);
  EXPECT_EQ(trace.size(), 8u);
  EXPECT_EQ(flat_parameters(m), before);
}

TEST(Train, SingleSampleConverges) {
  auto cfg = testutil::tiny_config();
  auto m = svt::SvtModel<double>::init(cfg, 3);
  auto data = synthetic_videos(1, 4);
  data.resize(1);
  auto t = tiny_train_config();
  t.batch = 1;
  t.epochs = 100;
  t.momentum = 0.0;
  t.lr = 0.02;
  auto trace = svt::train(m, data, svt::synthetic_class_space(3, cfg.sem_dim, 4), t);
  ASSERT_EQ(trace.size(), 100u);
  EXPECT_LT(trace.back().loss, 1e-3);
  // once the loss reaches the rounding floor its last digits are noise
  for (std::size_t i = 10; i < trace.size() && trace[i - 1].loss > 1e-12; ++i) {
    EXPECT_LE(trace[i].loss, trace[i - 1].loss) << "step " << i << " " << trace[i].loss;
  }
}

TEST(Train, SmallStepsScaleWithLearningRate) {
  auto cfg = testutil::tiny_config();
  auto base = svt::SvtModel<double>::init(cfg, 5);
  testutil::perturb(base, 5, 0.1);
  auto data = synthetic_videos(1, 5);
  auto space = svt::synthetic_class_space(3, cfg.sem_dim, 5);
  auto t = tiny_train_config();
  t.max_steps = 1;
  const auto p0 = flat_parameters(base);
  std::vector<double> deltas;
  for (double lr : {1e-7, 2e-7}) {
    auto m = base.clone();
    t.lr = lr;
    svt::train(m, data, space, t);
    const auto p1 = flat_parameters(m);
    double sq = 0.0;
    for (std::size_t i = 0; i < p0.size(); ++i) sq += (p1[i] - p0[i]) * (p1[i] - p0[i]);
    deltas.push_back(std::sqrt(sq));
  }
  EXPECT_GT(deltas[0], 0.0);
  EXPECT_NEAR(deltas[1] / deltas[0], 2.0, 1e-3);
}

TEST(Train, SameSeedSameRun) {
  auto cfg = testutil::tiny_config();
  auto space = svt::synthetic_class_space(3, cfg.sem_dim, 6);
  auto data = synthetic_videos(2, 6);
  auto t = tiny_train_config();
  t.epochs = 2;
  auto a = svt::SvtModel<float>::init(cfg, 6), b = svt::SvtModel<float>::init(cfg, 6);
  auto ta = svt::train(a, data, space, t), tb = svt::train(b, data, space, t);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i].loss, tb[i].loss);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  }
}

TEST(Train, MissingEmbeddingNamesTheClass) {
  auto cfg = testutil::tiny_config();
  auto m = svt::SvtModel<float>::init(cfg, 0);
  auto space = svt::synthetic_class_space(3, cfg.sem_dim, 0).restrict_to({{0}, {2}});
  try {
    svt::train(m, synthetic_videos(1, 0), space, tiny_train_config());
    FAIL();
  } catch (const svt::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class id(s) 1"), std::string::npos) << e.what();
  }
}

TEST(Train, DivergenceIsReported) {
  auto cfg = testutil::tiny_config();
  auto m = svt::SvtModel<float>::init(cfg, 0);
  auto t = tiny_train_config();
  t.lr = 1e12;
  t.epochs = 20;
  try {
    svt::train(m, synthetic_videos(1, 0), svt::synthetic_class_space(3, cfg.sem_dim, 0), t);
    FAIL();
  } catch (const svt::NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged at step"), std::string::npos) << e.what();
  }
}

TEST(Train, WritesPeriodicCheckpoints) {
  auto cfg = testutil::tiny_config();
  auto m = svt::SvtModel<float>::init(cfg, 0);
  auto t = tiny_train_config();
  t.epochs = 5;
  t.batch = 3;
  t.checkpoint_every = 2;
  t.checkpoint_dir = testutil::temp_dir("train-ckpt");
  svt::train(m, synthetic_videos(1, 0), svt::synthetic_class_space(3, cfg.sem_dim, 0), t);
  EXPECT_TRUE(std::filesystem::exists(t.checkpoint_dir / "step-000002.svtckpt"));
  EXPECT_TRUE(std::filesystem::exists(t.checkpoint_dir / "step-000004.svtckpt"));
  EXPECT_FALSE(std::filesystem::exists(t.checkpoint_dir / "step-000005.svtckpt"));
  svt::write_loss_trace(t.checkpoint_dir / "loss.tsv", {{0, 1.5}});
  std::ifstream is(t.checkpoint_dir / "loss.tsv");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "step\tloss");
  EXPECT_EQ(row, "0\t1.5");
}

TEST(Train, RejectsMismatchedSetups) {
  auto cfg = testutil::tiny_config();
  auto m = svt::SvtModel<float>::init(cfg, 0);
  auto data = synthetic_videos(1, 0);
  auto t = tiny_train_config();
  EXPECT_THROW(svt::train(m, {}, svt::synthetic_class_space(3, cfg.sem_dim, 0), t), svt::DataError);
  EXPECT_THROW(svt::train(m, data, svt::synthetic_class_space(3, cfg.sem_dim + 1, 0), t), svt::ShapeError);
  t.preprocess.crop_width = 24;
  EXPECT_THROW(svt::train(m, data, svt::synthetic_class_space(3, cfg.sem_dim, 0), t), svt::ConfigError);
}

TEST(Train, TinyModelGradientsMatchFiniteDifferences) {
  auto cfg = testutil::tiny_config();
  cfg.depth = 1;
  cfg.height = cfg.width = 16;
  auto m = svt::SvtModel<double>::init(cfg, 7);
  testutil::perturb(m, 7, 0.2);
  svt::Rng rng(7);
  auto clip = testutil::random_clip(cfg, 2, rng);
  svt::Tensor<double> phi({2, cfg.sem_dim}, testutil::random_values<double>(2 * cfg.sem_dim, rng));
  auto loss = [&] { return svt::semantic_loss(svt::embed_video(m, clip), phi); };
  EXPECT_LT(svt::grad_check(loss, m.parameters(), 1e-5).max_rel_error(), 1e-4);
}

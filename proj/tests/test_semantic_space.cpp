#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "svt/semantic_space.hpp"
#include "test_util.hpp"

namespace {

double ref_cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
}

svt::SemanticSpace random_space(std::size_t n, std::size_t dim, std::int64_t first_id, svt::Rng& rng) {
  svt::SemanticSpace s(dim);
  for (std::size_t i = 0; i < n; ++i) s.add({first_id + static_cast<std::int64_t>(i)}, testutil::random_values<double>(dim, rng));
  return s;
}

/// Test space whose classes are noisy copies of train classes, some close enough to be flagged.
svt::SemanticSpace near_copies(const svt::SemanticSpace& train, std::size_t n, svt::Rng& rng) {
  svt::SemanticSpace s(train.dim());
  for (std::size_t i = 0; i < n; ++i) {
    auto v = train.entries()[rng.index(train.size())].vector;
    const double noise = rng.uniform(0.0, 0.6);
    for (auto& x : v) x += rng.uniform(-noise, noise);
    s.add({1000 + static_cast<std::int64_t>(i)}, v);
  }
  return s;
}

std::filesystem::path write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string fair_split_text() {
  std::string s = "# source\tclass id\tlabel\n";
  int id = 0;
  for (auto [src, n] : std::vector<std::pair<std::string, int>>{{"UCF101", 8}, {"HMDB51", 3}, {"ActivityNet", 19}}) {
    for (int i = 0; i < n; ++i, ++id) s += src + "\t" + std::to_string(id) + "\tclass " + std::to_string(id) + "\n";
  }
  return s;
}

}  // namespace

TEST(SemanticSpace, AddValidatesVectors) {
  svt::SemanticSpace s(3, "unit");
  s.add({5}, {1, 0, 0});
  s.add({2}, {0, 1, 0});
  EXPECT_EQ(s.ids(), (std::vector<svt::ClassId>{{2}, {5}}));
  EXPECT_THROW(s.add({5}, {0, 0, 1}), svt::DataError);
  EXPECT_THROW(s.add({6}, {0, 0}), svt::ShapeError);
  EXPECT_THROW(s.add({7}, {0, 0, 0}), svt::DataError);
  EXPECT_THROW(s.add({8}, {std::nan(""), 0, 1}), svt::NonFiniteError);
  EXPECT_THROW(s.at({9}), svt::DataError);
  EXPECT_EQ(s.restrict_to({{5}}).size(), 1u);
  EXPECT_EQ(s.missing({{2}, {9}, {10}}), (std::vector<svt::ClassId>{{9}, {10}}));
}

TEST(SemanticSpace, CosineDistanceExamples) {
  EXPECT_NEAR(svt::cosine_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0, 1e-15);
  EXPECT_NEAR(svt::cosine_distance(std::vector<double>{1, 2}, std::vector<double>{2, 4}), 0.0, 1e-15);
  EXPECT_NEAR(svt::cosine_distance(std::vector<double>{1, 0}, std::vector<double>{-3, 0}), 2.0, 1e-15);
  try {
    svt::cosine_distance(std::vector<double>{0, 0}, std::vector<double>{1, 0}, "f", "class 3");
    FAIL();
  } catch (const svt::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("f"), std::string::npos);
  }
}

TEST(Embeddings, LabelAndDescriptionLookup) {
  std::istringstream is("3 2\njump 1 2\nrope 3 4\n7 0.5 -0.5\n");
  auto table = svt::read_embedding_table(is);
  EXPECT_EQ(table.dim, 2u);
  std::vector<svt::ClassInfo> classes = {{{7}, "jump", "skipping"}, {{8}, "jump rope", "skipping rope"}};
  auto cl = svt::load_embeddings(table, classes, svt::EmbeddingMode::class_label);
  EXPECT_EQ(cl.at({7}), (std::vector<double>{1, 2}));
  EXPECT_EQ(cl.at({8}), (std::vector<double>{2, 3}));
  EXPECT_EQ(cl.entries()[0].mode, svt::EmbeddingMode::class_label);
  try {
    svt::load_embeddings(table, classes, svt::EmbeddingMode::class_description);
    FAIL();
  } catch (const svt::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("8"), std::string::npos) << e.what();
  }
  auto cd = svt::load_embeddings(table, {classes[0]}, svt::EmbeddingMode::class_description);
  EXPECT_EQ(cd.at({7}), (std::vector<double>{0.5, -0.5}));
}

TEST(Embeddings, TableRejectsMalformedRecords) {
  std::istringstream bad_number("a 1 x\n");
  EXPECT_THROW(svt::read_embedding_table(bad_number), svt::IoError);
  std::istringstream ragged("a 1 2\nb 1\n");
  EXPECT_THROW(svt::read_embedding_table(ragged), svt::ShapeError);
  std::istringstream empty("");
  EXPECT_THROW(svt::read_embedding_table(empty), svt::IoError);
  EXPECT_THROW(svt::parse_embedding_mode("XY"), svt::ConfigError);
}

TEST(Embeddings, WrittenTableReadsBackExactly) {
  svt::Rng rng(3);
  auto s = random_space(6, 5, 1, rng);
  auto dir = testutil::temp_dir("emb");
  svt::write_embedding_table(dir / "e.txt", s);
  auto t = svt::read_embedding_table(dir / "e.txt");
  std::vector<svt::ClassInfo> classes;
  for (auto id : s.ids()) classes.push_back({id, "x", "y"});
  auto r = svt::load_embeddings(t, classes, svt::EmbeddingMode::class_description);
  for (auto id : s.ids()) EXPECT_EQ(r.at(id), s.at(id));
}

TEST(Overlap, IdenticalClassIsFlaggedAndOrthogonalIsNot) {
  svt::SemanticSpace train(3), test(3), ortho(3);
  train.add({1}, {1, 0, 0});
  train.add({2}, {0, 1, 0});
  test.add({10}, {0, 2, 0});
  ortho.add({11}, {0, 0, 1});
  auto r = svt::audit_overlap(train, test);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].nearest_train_class, svt::ClassId{2});
  EXPECT_NEAR(r.entries[0].distance, 0.0, 1e-15);
  EXPECT_TRUE(r.entries[0].flagged);
  EXPECT_EQ(svt::audit_overlap(train, ortho).flagged_count(), 0u);
  EXPECT_EQ(svt::audit_overlap(train, train).overlap_fraction(), 1.0);
}

TEST(Overlap, MatchesDoubleLoopOracle) {
  svt::Rng rng(77);
  std::size_t flagged_total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto train = random_space(20, 6, 0, rng);
    auto test = near_copies(train, 20, rng);
    const double tau = 0.05;
    auto r = svt::audit_overlap(train, test, tau);
    ASSERT_EQ(r.entries.size(), test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto& u = test.entries()[i];
      double best = 1e300;
      svt::ClassId arg{};
      for (const auto& s : train.entries()) {
        const double d = ref_cosine_distance(s.vector, u.vector);
        if (d < best) {
          best = d;
          arg = s.id;
        }
      }
      EXPECT_EQ(r.entries[i].test_class, u.id);
      EXPECT_EQ(r.entries[i].nearest_train_class, arg);
      EXPECT_NEAR(r.entries[i].distance, best, 1e-12);
      EXPECT_EQ(r.entries[i].flagged, best < tau);
      flagged_total += r.entries[i].flagged;
    }
  }
  EXPECT_GT(flagged_total, 0u);
}

TEST(Overlap, RestrictiveSetMatchesRemovalOracle) {
  svt::Rng rng(78);
  for (int trial = 0; trial < 50; ++trial) {
    auto train = random_space(20, 6, 0, rng);
    std::vector<svt::SemanticSpace> tests = {near_copies(train, 8, rng), near_copies(train, 5, rng)};
    auto kept = svt::build_restrictive_trainset(train, tests, 0.05);
    std::vector<svt::ClassId> expect;
    for (const auto& s : train.entries()) {
      bool remove = false;
      for (const auto& t : tests) {
        for (const auto& u : t.entries()) remove = remove || ref_cosine_distance(s.vector, u.vector) < 0.05;
      }
      if (!remove) expect.push_back(s.id);
    }
    EXPECT_EQ(kept, expect);
  }
}

TEST(Overlap, RestrictiveEdgeCases) {
  svt::Rng rng(79);
  auto train = random_space(10, 4, 0, rng);
  svt::SemanticSpace far(4);
  far.add({500}, {1, 1, 1, 1});
  std::vector<double> neg = {-1, -1, -1, -1};
  svt::SemanticSpace opposite(4);
  opposite.add({501}, neg);
  auto all = train.ids();
  // a test class opposite to everything is never within tau of anything
  svt::SemanticSpace trainpos(4);
  for (std::size_t i = 0; i < 5; ++i) {
    auto v = testutil::random_values<double>(4, rng, 0.1, 1.0);
    trainpos.add({static_cast<std::int64_t>(i)}, v);
  }
  EXPECT_EQ(svt::build_restrictive_trainset(trainpos, {opposite}), trainpos.ids());

  svt::SemanticSpace dup(4);
  dup.add({900}, train.at({3}));
  dup.add({901}, train.at({7}));
  auto kept = svt::build_restrictive_trainset(train, {dup});
  std::vector<svt::ClassId> expect;
  for (auto id : all) {
    if (id != svt::ClassId{3} && id != svt::ClassId{7}) expect.push_back(id);
  }
  EXPECT_EQ(kept, expect);
  EXPECT_EQ(svt::build_restrictive_trainset(train, {dup}, 0.0), all);
  EXPECT_TRUE(svt::build_restrictive_trainset(train, {far}, 2.5).empty());
}

TEST(Overlap, ScalingChangesNoFlags) {
  svt::Rng rng(80);
  for (int trial = 0; trial < 20; ++trial) {
    auto train = random_space(15, 5, 0, rng);
    auto test = near_copies(train, 15, rng);
    svt::SemanticSpace strain(5), stest(5);
    for (const auto& e : train.entries()) {
      auto v = e.vector;
      const double k = rng.uniform(0.01, 100.0);
      for (auto& x : v) x *= k;
      strain.add(e.id, v);
    }
    for (const auto& e : test.entries()) {
      auto v = e.vector;
      const double k = rng.uniform(0.01, 100.0);
      for (auto& x : v) x *= k;
      stest.add(e.id, v);
    }
    auto a = svt::audit_overlap(train, test), b = svt::audit_overlap(strain, stest);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      EXPECT_EQ(a.entries[i].flagged, b.entries[i].flagged);
      EXPECT_EQ(a.entries[i].nearest_train_class, b.entries[i].nearest_train_class);
    }
  }
}

TEST(Overlap, DistanceIsSymmetric) {
  svt::Rng rng(81);
  for (int i = 0; i < 100; ++i) {
    auto a = testutil::random_values<double>(7, rng), b = testutil::random_values<double>(7, rng);
    EXPECT_NEAR(svt::cosine_distance(a, b), svt::cosine_distance(b, a), 1e-15);
  }
}

TEST(FairZsl, ListedSplitHasDeclaredCounts) {
  auto dir = testutil::temp_dir("fzsl");
  auto set = svt::build_fair_zsl_testset(write_file(dir / "split.tsv", fair_split_text()));
  EXPECT_EQ(set.classes.size(), 30u);
  EXPECT_EQ(set.counts.at("UCF101"), 8u);
  EXPECT_EQ(set.counts.at("HMDB51"), 3u);
  EXPECT_EQ(set.counts.at("ActivityNet"), 19u);
  EXPECT_EQ(set.ids().size(), 30u);
}

TEST(FairZsl, RejectsBadSplitFiles) {
  auto dir = testutil::temp_dir("fzsl-bad");
  EXPECT_THROW(svt::build_fair_zsl_testset(write_file(dir / "empty.tsv", "# nothing\n")), svt::DataError);
  auto text = fair_split_text();
  try {
    svt::build_fair_zsl_testset(write_file(dir / "dup.tsv", text + "UCF101\t99\tclass 4\n"));
    FAIL();
  } catch (const svt::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class 4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(svt::build_fair_zsl_testset(write_file(dir / "dupid.tsv", text + "UCF101\t4\tother\n")), svt::DataError);
  EXPECT_THROW(svt::build_fair_zsl_testset(write_file(dir / "count.tsv", text + "UCF101\t98\tnew one\n")),
               svt::DataError);
  EXPECT_THROW(svt::build_fair_zsl_testset(write_file(dir / "fields.tsv", "UCF101\t1\n")), svt::IoError);
  EXPECT_THROW(svt::build_fair_zsl_testset(dir / "missing.tsv"), svt::IoError);
}

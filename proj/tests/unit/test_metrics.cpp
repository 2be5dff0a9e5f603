#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "helpers.hpp"
#include "iia/errors.hpp"
#include "iia/metrics.hpp"

using namespace iia;

namespace {

std::unique_ptr<InstrumentedModel> probe(std::int64_t c, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  torch::manual_seed(seed);
  auto net = std::make_shared<LinearProbeImpl>(std::vector<std::int64_t>{c, h, w}, 3);
  net->to(torch::kDouble);
  CnnOptions o;
  o.name = "probe";
  o.input_shape = {c, h, w};
  o.normalization = Normalization::identity();
  return instrument_cnn(net, o);
}

std::unique_ptr<InstrumentedModel> constant_model(std::vector<float> logits, std::int64_t h, std::int64_t w) {
  auto net = std::make_shared<ConstantLogitsImpl>(std::move(logits));
  CnnOptions o;
  o.name = "constant";
  o.input_shape = {3, h, w};
  return instrument_cnn(net, o);
}

AttributionMap make_map(std::int64_t h, std::int64_t w, std::vector<float> values) {
  AttributionMap m;
  m.height = h;
  m.width = w;
  m.values = std::move(values);
  return m;
}

AttributionMap random_map(std::int64_t h, std::int64_t w, std::mt19937_64& rng, bool ties) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::uniform_int_distribution<int> level(0, 3);
  std::vector<float> v(static_cast<std::size_t>(h * w));
  for (auto& x : v) x = ties ? static_cast<float>(level(rng)) : u(rng);
  return make_map(h, w, v);
}

// Rank of pixel p: strictly larger values first, ties by raster index.
std::vector<std::int64_t> oracle_ranks(const AttributionMap& m) {
  const auto n = m.size();
  std::vector<std::int64_t> rank(static_cast<std::size_t>(n), 0);
  for (std::int64_t p = 0; p < n; ++p) {
    for (std::int64_t q = 0; q < n; ++q) {
      const float vp = m.values[static_cast<std::size_t>(p)], vq = m.values[static_cast<std::size_t>(q)];
      if (vq > vp || (vq == vp && q < p)) ++rank[static_cast<std::size_t>(p)];
    }
  }
  return rank;
}

std::int64_t oracle_count(int i, int steps, std::int64_t n) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(i * n) / steps + 0.5));
}

double softmax_score(const InstrumentedModel& model, const torch::Tensor& image, int y) {
  torch::NoGradGuard g;
  auto logits = model.forward(image.unsqueeze(0))[0].to(torch::kDouble);
  return torch::softmax(logits, 0)[y].item<double>();
}

// Image with pixel p zeroed (all channels) wherever `drop(rank)` holds.
torch::Tensor oracle_masked(const torch::Tensor& image, const std::vector<std::int64_t>& rank,
                            const std::function<bool(std::int64_t)>& drop) {
  auto out = image.clone();
  const auto w = image.size(2);
  for (std::size_t p = 0; p < rank.size(); ++p) {
    if (drop(rank[p])) {
      for (std::int64_t c = 0; c < image.size(0); ++c) out[c][static_cast<std::int64_t>(p) / w][static_cast<std::int64_t>(p) % w] = 0.0;
    }
  }
  return out;
}

double oracle_trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) s += (x[i + 1] - x[i]) * (y[i] + y[i + 1]) / 2.0;
  return s / (x.back() - x.front());
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc({0.0, 0.5, 1.0}, {1.0, 1.0, 1.0}), 1.0);
  EXPECT_DOUBLE_EQ(auc({0.0, 1.0}, {0.0, 1.0}), 0.5);
  EXPECT_DOUBLE_EQ(auc({0.1, 0.5, 0.9}, {0.3, 0.3, 0.3}), 0.3);
  EXPECT_THROW(auc({0.0}, {1.0}), InvalidArgument);
  EXPECT_THROW(auc({0.5, 0.1}, {1.0, 1.0}), InvalidArgument);
}

TEST(Auc, MatchesFineRiemannSum) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x{0.0, 0.0, 0.0, 0.0, 0.0}, y(5);
  for (int i = 1; i < 5; ++i) x[i] = x[i - 1] + 0.05 + u(rng);
  for (auto& v : y) v = u(rng);
  // Midpoint rule on the piecewise-linear curve.
  const int samples = 2000000;
  const double span = x.back() - x.front();
  double sum = 0.0;
  std::size_t seg = 0;
  for (int s = 0; s < samples; ++s) {
    const double t = x.front() + (s + 0.5) * span / samples;
    while (t > x[seg + 1]) ++seg;
    const double f = (t - x[seg]) / (x[seg + 1] - x[seg]);
    sum += y[seg] + f * (y[seg + 1] - y[seg]);
  }
  EXPECT_NEAR(auc(x, y), sum / samples, 1e-9);
  EXPECT_NEAR(auc(x, y), oracle_trapezoid(x, y), 1e-12);
}

TEST(Order, RasterTieBreakAndCounts) {
  auto flat = make_map(2, 3, std::vector<float>(6, 0.5f));
  EXPECT_EQ(relevance_order(flat), (std::vector<std::int64_t>{0, 1, 2, 3, 4, 5}));
  auto m = make_map(2, 2, {0.1f, 0.9f, 0.9f, -1.0f});
  EXPECT_EQ(relevance_order(m), (std::vector<std::int64_t>{1, 2, 0, 3}));
  EXPECT_EQ(masked_count(1, 10, 25), 3);  // 2.5 rounds up
  EXPECT_EQ(masked_count(3, 10, 9), 3);   // 2.7
  EXPECT_EQ(masked_count(10, 10, 9), 9);
  EXPECT_EQ(masked_count(0, 10, 9), 0);
}

TEST(Perturbation, MatchesBruteForceMaskingSequence) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const std::int64_t h = 3 + trial % 6, w = 3 + (trial * 5) % 6;
    auto model = probe(3, h, w, 30 + trial);
    auto image = torch::rand({3, h, w}, torch::kDouble);
    auto map = random_map(h, w, rng, trial % 2 == 1);
    const int y = trial % 3;
    const auto rank = oracle_ranks(map);
    const auto n = map.size();
    for (auto order : {PerturbationOrder::pos, PerturbationOrder::neg}) {
      auto curve = perturbation_curve(*model, image, map, y, order);
      ASSERT_EQ(curve.scores.size(), 9u);
      for (int i = 1; i <= 9; ++i) {
        const auto k = oracle_count(i, 10, n);
        auto masked = oracle_masked(image, rank, [&](std::int64_t r) {
          return order == PerturbationOrder::pos ? r < k : r >= n - k;
        });
        EXPECT_NEAR(curve.scores[i - 1], softmax_score(*model, masked, y), 1e-14);
        EXPECT_DOUBLE_EQ(curve.fractions[i - 1], i / 10.0);
      }
      EXPECT_NEAR(curve.auc, oracle_trapezoid(curve.fractions, curve.scores), 1e-12);
    }
  }
}

TEST(Perturbation, SinglePeakIsRemovedFirst) {
  auto model = probe(1, 4, 4, 3);
  auto image = torch::rand({1, 4, 4}, torch::kDouble);
  std::vector<float> v(16, 0.0f);
  v[9] = 5.0f;
  auto map = make_map(4, 4, v);
  auto curve = perturbation_curve(*model, image, map, 0, PerturbationOrder::pos);
  // 0.1 of 16 pixels rounds to 2: the peak and raster filler pixel 0.
  auto masked = image.clone();
  masked[0][2][1] = 0.0;
  masked[0][0][0] = 0.0;
  EXPECT_NEAR(curve.scores[0], softmax_score(*model, masked, 0), 1e-15);
}

TEST(Perturbation, NegVisitsPixelsInReversedOrder) {
  auto model = probe(1, 3, 3, 5);
  auto image = torch::rand({1, 3, 3}, torch::kDouble);
  auto flat = make_map(3, 3, std::vector<float>(9, 1.0f));
  auto pos = perturbation_curve(*model, image, flat, 1, PerturbationOrder::pos);
  auto neg = perturbation_curve(*model, image, flat, 1, PerturbationOrder::neg);
  auto rank = oracle_ranks(flat);
  for (int i = 1; i <= 9; ++i) {
    const auto k = oracle_count(i, 10, 9);
    auto raster_tail = oracle_masked(image, rank, [&](std::int64_t r) { return r >= 9 - k; });
    EXPECT_NEAR(neg.scores[i - 1], softmax_score(*model, raster_tail, 1), 1e-15);
  }
  EXPECT_NE(pos.scores, neg.scores);
}

TEST(Perturbation, ConstantModelGivesFlatCurves) {
  auto model = constant_model({0.0f, std::log(3.0f)}, 5, 5);
  auto image = torch::rand({3, 5, 5});
  std::mt19937_64 rng(1);
  auto map = random_map(5, 5, rng, false);
  const double p = 3.0 / 4.0;
  for (auto order : {PerturbationOrder::pos, PerturbationOrder::neg}) {
    auto c = perturbation_curve(*model, image, map, 1, order);
    for (double s : c.scores) EXPECT_NEAR(s, p, 1e-7);
    EXPECT_NEAR(c.auc, p, 1e-7);
  }
  for (auto mode : {InsDelMode::insertion, InsDelMode::deletion}) {
    EXPECT_NEAR(insertion_deletion(*model, image, map, 1, mode).auc, p, 1e-7);
  }
}

TEST(InsertionDeletion, ExhaustiveThreeByThree) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 4; ++trial) {
    auto model = probe(1, 3, 3, 40 + trial);
    auto image = torch::rand({1, 3, 3}, torch::kDouble);
    auto map = random_map(3, 3, rng, trial >= 2);
    const auto rank = oracle_ranks(map);
    auto del = insertion_deletion(*model, image, map, 2, InsDelMode::deletion);
    auto ins = insertion_deletion(*model, image, map, 2, InsDelMode::insertion);
    ASSERT_EQ(del.scores.size(), 11u);
    for (int i = 0; i <= 10; ++i) {
      const auto k = oracle_count(i, 10, 9);
      auto deleted = oracle_masked(image, rank, [&](std::int64_t r) { return r < k; });
      auto inserted = oracle_masked(image, rank, [&](std::int64_t r) { return r >= k; });
      EXPECT_NEAR(del.scores[i], softmax_score(*model, deleted, 2), 1e-14);
      EXPECT_NEAR(ins.scores[i], softmax_score(*model, inserted, 2), 1e-14);
    }
    EXPECT_NEAR(del.auc, oracle_trapezoid(del.fractions, del.scores), 1e-12);
    EXPECT_NEAR(ins.auc, oracle_trapezoid(ins.fractions, ins.scores), 1e-12);
  }
}

TEST(RankInvariance, CubingLeavesCurvesIdentical) {
  std::mt19937_64 rng(17);
  auto model = probe(3, 6, 6, 9);
  for (int trial = 0; trial < 5; ++trial) {
    auto image = torch::rand({3, 6, 6}, torch::kDouble);
    auto map = random_map(6, 6, rng, trial % 2 == 0);
    auto cubed = map;
    for (auto& v : cubed.values) v = v * v * v;
    for (auto order : {PerturbationOrder::pos, PerturbationOrder::neg}) {
      EXPECT_EQ(perturbation_curve(*model, image, map, 0, order).scores,
                perturbation_curve(*model, image, cubed, 0, order).scores);
    }
    for (auto mode : {InsDelMode::insertion, InsDelMode::deletion}) {
      EXPECT_EQ(insertion_deletion(*model, image, map, 0, mode).scores,
                insertion_deletion(*model, image, cubed, 0, mode).scores);
    }
  }
}

TEST(AdpPic, HandSubstitution) {
  auto r = adp_pic_from_scores({0.8, 0.5}, {0.4, 0.6});
  EXPECT_DOUBLE_EQ(r.adp, 25.0);
  EXPECT_DOUBLE_EQ(r.pic, 50.0);
  auto same = adp_pic_from_scores({0.3, 0.7}, {0.3, 0.7});
  EXPECT_EQ(same.adp, 0.0);
  EXPECT_EQ(same.pic, 0.0);
  auto up = adp_pic_from_scores({0.3, 0.7}, {0.4, 0.9});
  EXPECT_EQ(up.adp, 0.0);
  EXPECT_EQ(up.pic, 100.0);
  EXPECT_THROW(adp_pic_from_scores({0.0}, {0.1}), NumericError);
}

TEST(AdpPic, MasksWithTheNormalisedMap) {
  auto model = probe(1, 3, 3, 7);
  auto image = torch::rand({1, 3, 3}, torch::kDouble);
  auto map = make_map(3, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  auto mask = normalized_mask(map);
  EXPECT_DOUBLE_EQ(mask[0][0].item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(mask[2][2].item<double>(), 1.0);
  auto got = adp_pic(*model, {{image, map, 1}});
  const double y = softmax_score(*model, image, 1);
  const double o = softmax_score(*model, image * mask.unsqueeze(0), 1);
  EXPECT_NEAR(got.adp, 100.0 * std::max(0.0, y - o) / y, 1e-12);
  EXPECT_EQ(got.pic, y < o ? 100.0 : 0.0);
  EXPECT_TRUE(torch::all(normalized_mask(make_map(2, 2, {3, 3, 3, 3})) == 1.0).item<bool>());
}

TEST(SicAic, NoBlurGivesFlatCurveAtCleanScore) {
  auto model = probe(3, 8, 8, 12);
  auto image = torch::rand({3, 8, 8}, torch::kDouble);
  std::mt19937_64 rng(2);
  auto map = random_map(8, 8, rng, false);
  SicAicOptions o;
  o.blur_sigma = 0.0;
  auto r = sic_aic(*model, {{image, map, 0}}, o);
  const double clean = softmax_score(*model, image, 0);
  EXPECT_NEAR(r.sic, clean, 1e-12);
  for (double s : r.softmax_curves[0].scores) EXPECT_NEAR(s, clean, 1e-12);
}

TEST(SicAic, TwoStepScheduleMatchesHandTrapezoid) {
  auto model = probe(3, 8, 8, 14);
  auto image = torch::rand({3, 8, 8}, torch::kDouble);
  std::mt19937_64 rng(3);
  auto map = random_map(8, 8, rng, false);
  // Information proxy: number of distinct pixel values, so the blurred base
  // has less information than the clean image.
  SicAicOptions o;
  o.steps = 2;
  o.compressor = [](const torch::Tensor& px) {
    auto flat = px.flatten().contiguous();
    std::set<std::uint8_t> distinct(flat.data_ptr<std::uint8_t>(), flat.data_ptr<std::uint8_t>() + flat.numel());
    return distinct.size();
  };
  auto r = sic_aic(*model, {{image, map, 1}}, o);
  const auto& c = r.softmax_curves[0];
  ASSERT_EQ(c.fractions.size(), 2u);
  EXPECT_LT(c.fractions[0], 1.0);
  EXPECT_DOUBLE_EQ(c.fractions[1], 1.0);
  const double clean = softmax_score(*model, image, 1);
  EXPECT_NEAR(c.scores[1], clean, 1e-12);
  EXPECT_NEAR(r.sic, (c.scores[0] + c.scores[1]) / 2.0, 1e-12);
  const auto& a = r.accuracy_curves[0];
  EXPECT_NEAR(r.aic, (a.scores[0] + a.scores[1]) / 2.0, 1e-12);
}

TEST(Segmentation, PerfectAndInvertedMaps) {
  std::vector<std::uint8_t> mask{0, 1, 1, 0, 1, 0, 0, 0, 1};
  std::vector<float> same(mask.begin(), mask.end()), inverted;
  for (auto m : mask) inverted.push_back(1.0f - m);
  auto s = segmentation_scores(make_map(3, 3, same), mask);
  EXPECT_EQ(s.pa, 1.0);
  EXPECT_EQ(s.miou, 1.0);
  EXPECT_EQ(s.mf1, 1.0);
  EXPECT_EQ(s.ap, 1.0);
  auto t = segmentation_scores(make_map(3, 3, inverted), mask);
  EXPECT_EQ(t.miou, 0.0);
  EXPECT_EQ(t.mf1, 0.0);
  EXPECT_EQ(t.pa, 0.0);
}

TEST(Segmentation, EmptyMaskRules) {
  std::vector<std::uint8_t> empty(4, 0);
  auto none = segmentation_scores(make_map(2, 2, {0, 0, 0, 0}), empty);
  EXPECT_EQ(none.pa, 1.0);
  EXPECT_EQ(none.miou, 1.0);
  EXPECT_EQ(none.mf1, 1.0);
  auto some = segmentation_scores(make_map(2, 2, {1, 0, 0, 0}), empty);
  EXPECT_EQ(some.pa, 0.75);
  EXPECT_EQ(some.miou, 0.0);
  EXPECT_EQ(some.mf1, 0.0);
}

TEST(Segmentation, RandomInstancesMatchConfusionMatrixOracle) {
  std::mt19937_64 rng(19);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 10; ++trial) {
    auto map = random_map(8, 8, rng, trial % 3 == 0);
    std::vector<std::uint8_t> mask(64);
    for (auto& m : mask) m = coin(rng);
    mask[static_cast<std::size_t>(trial)] = 1;
    auto got = segmentation_scores(map, mask);

    double mean = 0.0;
    for (float v : map.values) mean += v;
    mean /= 64.0;
    int cm[2][2] = {{0, 0}, {0, 0}};  // [truth][pred]
    for (int p = 0; p < 64; ++p) cm[mask[p]][map.values[p] >= mean ? 1 : 0]++;
    const double tp = cm[1][1], tn = cm[0][0], fp = cm[0][1], fn = cm[1][0];
    EXPECT_NEAR(got.pa, (tp + tn) / 64.0, 1e-15);
    auto iou = [](double a, double b, double c) { return a + b + c == 0 ? 1.0 : a / (a + b + c); };
    EXPECT_NEAR(got.miou, (iou(tp, fp, fn) + iou(tn, fn, fp)) / 2.0, 1e-15);
    auto f1 = [](double a, double b, double c) { return 2 * a + b + c == 0 ? 1.0 : 2 * a / (2 * a + b + c); };
    EXPECT_NEAR(got.mf1, (f1(tp, fp, fn) + f1(tn, fn, fp)) / 2.0, 1e-15);

    // AP over the distinct thresholds, descending.
    std::set<float, std::greater<float>> thresholds(map.values.begin(), map.values.end());
    double positives = 0;
    for (auto m : mask) positives += m;
    double ap = 0.0, prev_recall = 0.0;
    for (float t : thresholds) {
      double hit = 0, sel = 0;
      for (int p = 0; p < 64; ++p) {
        if (map.values[p] >= t) {
          sel += 1;
          hit += mask[p];
        }
      }
      ap += (hit / positives - prev_recall) * (hit / sel);
      prev_recall = hit / positives;
    }
    EXPECT_NEAR(got.ap, ap, 1e-12);
    for (double v : {got.pa, got.ap, got.miou, got.mf1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Segmentation, ConstantMapUsesPositivity) {
  std::vector<std::uint8_t> mask{1, 0, 0, 0};
  auto zero = segmentation_scores(make_map(2, 2, {0, 0, 0, 0}), mask);
  EXPECT_EQ(zero.pa, 0.75);
  auto one = segmentation_scores(make_map(2, 2, {1, 1, 1, 1}), mask);
  EXPECT_EQ(one.pa, 0.25);
}

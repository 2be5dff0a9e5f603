#include "iia/sanity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "iia/errors.hpp"
#include "iia/io/files.hpp"

namespace iia {
namespace {

std::vector<AttributionMap> compute_maps(const MapFunction& method, const InstrumentedModel& model,
                                         const std::vector<LabeledImage>& images) {
  std::vector<AttributionMap> maps;
  maps.reserve(images.size());
  for (const auto& item : images) maps.push_back(method(model, item.image, item.class_index));
  return maps;
}

std::vector<double> compare(const std::vector<AttributionMap>& a, const std::vector<AttributionMap>& b) {
  std::vector<double> rhos;
  for (std::size_t i = 0; i < a.size(); ++i) rhos.push_back(spearman(a[i], b[i]).rho);
  return rhos;
}

torch::Tensor logits_of(StagedCnn& network, const torch::Tensor& x) {
  auto h = x;
  for (int s = 1; s <= network.num_stages(); ++s) h = network.stage(s, h);
  return network.classify(h);
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("spearman: inputs differ in size");
  if (a.size() < 2) throw InvalidArgument("spearman needs at least two values");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  if (ra == rb) return {1.0, false};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

SpearmanResult spearman(const AttributionMap& a, const AttributionMap& b) {
  if (a.height != b.height || a.width != b.width) throw InvalidArgument("spearman: map shapes differ");
  return spearman(std::vector<double>(a.values.begin(), a.values.end()),
                  std::vector<double>(b.values.begin(), b.values.end()));
}

std::string to_string(RandomizationMode mode) {
  switch (mode) {
    case RandomizationMode::cascading: return "cascading";
    case RandomizationMode::independent: return "independent";
    case RandomizationMode::data: return "data";
  }
  return "unknown";
}

std::optional<RandomizationMode> parse_randomization_mode(const std::string& text) {
  for (auto m : {RandomizationMode::cascading, RandomizationMode::independent, RandomizationMode::data}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

RandomizationStep summarize_step(int step, std::string label, std::vector<double> rhos) {
  RandomizationStep s;
  s.step = step;
  s.label = std::move(label);
  s.rhos = std::move(rhos);
  if (s.rhos.empty()) return s;
  const double n = static_cast<double>(s.rhos.size());
  s.mean = std::accumulate(s.rhos.begin(), s.rhos.end(), 0.0) / n;
  double var = 0.0;
  for (double r : s.rhos) var += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(var / n);
  auto sorted = s.rhos;
  std::sort(sorted.begin(), sorted.end());
  const auto m = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  return s;
}

RandomizationReport cascading_randomization(const MapFunction& method, const InstrumentedModel& model,
                                            const std::vector<LabeledImage>& images, std::optional<int> depth_steps,
                                            std::uint64_t seed) {
  auto variant = model.clone(/*share_weights=*/false);
  const auto groups = variant->layer_groups();
  const int total = static_cast<int>(groups.size());
  const int steps = depth_steps.value_or(total);
  if (steps < 0 || steps > total) {
    throw InvalidArgument("cascading randomization over " + std::to_string(steps) + " steps but the model has " +
                          std::to_string(total) + " layer groups");
  }
  RandomizationReport report;
  report.mode = RandomizationMode::cascading;
  report.seed = seed;
  report.sample_size = static_cast<std::int64_t>(images.size());

  const auto original = compute_maps(method, model, images);
  report.steps.push_back(summarize_step(0, "none", compare(original, original)));
  for (int k = 1; k <= steps; ++k) {
    const auto g = static_cast<std::size_t>(total - k);
    reinitialize(groups[g], seed + g);
    freeze(*variant);
    report.steps.push_back(summarize_step(k, groups[g].name, compare(original, compute_maps(method, *variant, images))));
  }
  return report;
}

RandomizationReport independent_randomization(const MapFunction& method, const InstrumentedModel& model,
                                              const std::vector<LabeledImage>& images, std::uint64_t seed) {
  RandomizationReport report;
  report.mode = RandomizationMode::independent;
  report.seed = seed;
  report.sample_size = static_cast<std::int64_t>(images.size());
  const auto original = compute_maps(method, model, images);
  const auto count = model.layer_groups().size();
  for (std::size_t g = 0; g < count; ++g) {
    auto variant = model.clone(/*share_weights=*/false);
    const auto groups = variant->layer_groups();
    reinitialize(groups[g], seed + g);
    freeze(*variant);
    report.steps.push_back(summarize_step(static_cast<int>(g) + 1, groups[g].name,
                                          compare(original, compute_maps(method, *variant, images))));
  }
  return report;
}

std::pair<TensorDataset, TensorDataset> split_dataset(const TensorDataset& data, std::int64_t train_size,
                                                      std::int64_t test_size, std::uint64_t seed) {
  if (train_size < 0 || test_size < 0 || train_size + test_size > data.size()) {
    throw InvalidArgument("split of " + std::to_string(train_size) + "+" + std::to_string(test_size) +
                          " samples from a dataset of " + std::to_string(data.size()));
  }
  auto gen = at::detail::createCPUGenerator(seed);
  auto perm = torch::randperm(data.size(), gen);
  auto train_idx = perm.slice(0, 0, train_size), test_idx = perm.slice(0, train_size, train_size + test_size);
  return {TensorDataset{data.images.index_select(0, train_idx), data.labels.index_select(0, train_idx)},
          TensorDataset{data.images.index_select(0, test_idx), data.labels.index_select(0, test_idx)}};
}

double accuracy(StagedCnn& network, const TensorDataset& data) {
  torch::NoGradGuard no_grad;
  const bool was_training = network.module().is_training();
  network.module().eval();
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < data.size(); start += 512) {
    const auto end = std::min(data.size(), start + 512);
    auto pred = logits_of(network, data.images.slice(0, start, end)).argmax(1);
    correct += pred.eq(data.labels.slice(0, start, end)).sum().item<std::int64_t>();
  }
  network.module().train(was_training);
  return data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
}

double train_classifier(StagedCnn& network, const TensorDataset& data, const TrainingOptions& options) {
  if (data.size() == 0) throw InvalidArgument("cannot train on an empty dataset");
  auto& module = network.module();
  for (auto& p : module.parameters()) p.set_requires_grad(true);
  torch::optim::Adam optimizer(module.parameters(), torch::optim::AdamOptions(options.learning_rate));
  auto gen = at::detail::createCPUGenerator(options.seed);
  double acc = 0.0;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    module.train(true);
    auto perm = torch::randperm(data.size(), gen);
    for (std::int64_t start = 0; start < data.size(); start += options.batch_size) {
      auto idx = perm.slice(0, start, std::min(data.size(), start + options.batch_size));
      auto loss = torch::nn::functional::cross_entropy(logits_of(network, data.images.index_select(0, idx)),
                                                       data.labels.index_select(0, idx));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
    }
    acc = accuracy(network, data);
    if (acc >= options.target_accuracy) {
      module.eval();
      return acc;
    }
  }
  module.eval();
  throw TrainingBudgetError("training accuracy " + std::to_string(acc) + " below " +
                            std::to_string(options.target_accuracy) + " after " + std::to_string(options.max_epochs) +
                            " epochs");
}

RandomizationReport data_randomization(const MapFunction& method, const NetworkFactory& factory,
                                       const TensorDataset& train, const TensorDataset& test,
                                       const DataRandomizationOptions& options) {
  RandomizationReport report;
  report.mode = RandomizationMode::data;
  report.seed = options.training.seed;

  torch::manual_seed(options.training.seed);
  auto true_net = factory();
  report.true_train_accuracy = train_classifier(*true_net, train, options.training);
  report.true_test_accuracy = accuracy(*true_net, test);

  auto gen = at::detail::createCPUGenerator(options.training.seed + 1);
  TensorDataset permuted{train.images, train.labels.index_select(0, torch::randperm(train.size(), gen))};
  torch::manual_seed(options.training.seed + 2);
  auto permuted_net = factory();
  report.permuted_train_accuracy = train_classifier(*permuted_net, permuted, options.training);
  report.permuted_test_accuracy = accuracy(*permuted_net, test);

  auto true_model = instrument_cnn(true_net, options.instrument);
  auto permuted_model = instrument_cnn(permuted_net, options.instrument);
  const auto n = std::min(options.compare_images, test.size());
  std::vector<double> rhos;
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(test.labels[i].item<std::int64_t>());
    auto a = method(*true_model, test.images[i], label);
    auto b = method(*permuted_model, test.images[i], label);
    rhos.push_back(spearman(a, b).rho);
  }
  report.sample_size = n;
  report.steps.push_back(summarize_step(1, "permuted_labels", std::move(rhos)));
  return report;
}

void write_randomization_report(const RandomizationReport& report, const std::filesystem::path& csv_path,
                                const std::filesystem::path& plot_path) {
  std::ostringstream csv;
  csv << "mode,step,label,rho_mean,rho_std,rho_median,n\n";
  for (const auto& s : report.steps) {
    csv << to_string(report.mode) << ',' << s.step << ',' << s.label << ',' << format_fixed(s.mean, 4) << ','
        << format_fixed(s.std, 4) << ',' << format_fixed(s.median, 4) << ',' << s.rhos.size() << '\n';
  }
  write_file_atomic(csv_path, csv.str());

  // Line plot of mean +- std per step, or a box plot for data randomization.
  const int w = 640, h = 400, left = 60, right = 20, top = 30, bottom = 60;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  auto y_of = [&](double rho) { return top + static_cast<int>((1.0 - (rho + 1.0) / 2.0) * (h - top - bottom)); };
  const auto count = std::max<std::size_t>(report.steps.size(), 1);
  auto x_of = [&](std::size_t i) {
    return left + static_cast<int>((static_cast<double>(i) + 0.5) / static_cast<double>(count) * (w - left - right));
  };
  cv::line(img, {left, top}, {left, h - bottom}, cv::Scalar(0, 0, 0));
  cv::line(img, {left, h - bottom}, {w - right, h - bottom}, cv::Scalar(0, 0, 0));
  for (double tick : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    cv::line(img, {left - 4, y_of(tick)}, {w - right, y_of(tick)}, cv::Scalar(220, 220, 220));
    cv::putText(img, format_fixed(tick, 1), {5, y_of(tick) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0));
  }
  cv::putText(img, to_string(report.mode) + " randomization (Spearman rho)", {left, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(0, 0, 0));
  const cv::Scalar blue(180, 80, 20);
  for (std::size_t i = 0; i < report.steps.size(); ++i) {
    const auto& s = report.steps[i];
    const int x = x_of(i);
    if (report.mode == RandomizationMode::data && !s.rhos.empty()) {
      auto sorted = s.rhos;
      std::sort(sorted.begin(), sorted.end());
      auto q = [&](double p) { return sorted[static_cast<std::size_t>(p * static_cast<double>(sorted.size() - 1))]; };
      cv::rectangle(img, {x - 30, y_of(q(0.75))}, {x + 30, y_of(q(0.25))}, blue, 2);
      cv::line(img, {x - 30, y_of(s.median)}, {x + 30, y_of(s.median)}, blue, 2);
      cv::line(img, {x, y_of(sorted.back())}, {x, y_of(q(0.75))}, blue);
      cv::line(img, {x, y_of(q(0.25))}, {x, y_of(sorted.front())}, blue);
    } else {
      cv::line(img, {x, y_of(s.mean - s.std)}, {x, y_of(s.mean + s.std)}, blue);
      cv::circle(img, {x, y_of(s.mean)}, 3, blue, cv::FILLED);
      if (i > 0) cv::line(img, {x_of(i - 1), y_of(report.steps[i - 1].mean)}, {x, y_of(s.mean)}, blue, 1);
    }
    if (report.steps.size() <= 16 || i % 4 == 0) {
      cv::putText(img, s.label.substr(0, 10), {x - 20, h - bottom + 15 + static_cast<int>(i % 2) * 14},
                  cv::FONT_HERSHEY_SIMPLEX, 0.3, cv::Scalar(0, 0, 0));
    }
  }
  std::vector<uchar> png;
  cv::imencode(".png", img, png);
  write_file_atomic(plot_path, std::string(png.begin(), png.end()));
}

}  // namespace iia

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"
#include "iia/models/cnn.hpp"
#include "iia/models/instrumented_model.hpp"

namespace iia {

struct SpearmanResult {
  double rho = 0.0;
  // Set when either input is constant; rho is then 0.
  bool degenerate = false;
};

// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(const std::vector<double>& values);

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b);
SpearmanResult spearman(const AttributionMap& a, const AttributionMap& b);

// Produces the map compared across model variants.
using MapFunction = std::function<AttributionMap(const InstrumentedModel&, const torch::Tensor& image, int class_index)>;

struct LabeledImage {
  torch::Tensor image;  // model space (C,H,W)
  int class_index = 0;
};

enum class RandomizationMode { cascading, independent, data };
std::string to_string(RandomizationMode mode);
std::optional<RandomizationMode> parse_randomization_mode(const std::string& text);

struct RandomizationStep {
  int step = 0;
  std::string label;  // randomized layer group(s)
  std::vector<double> rhos;
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
};

struct RandomizationReport {
  RandomizationMode mode = RandomizationMode::cascading;
  std::vector<RandomizationStep> steps;
  std::int64_t sample_size = 0;
  std::uint64_t seed = 0;
  // Data randomization only.
  std::optional<double> true_train_accuracy, permuted_train_accuracy;
  std::optional<double> true_test_accuracy, permuted_test_accuracy;
};

RandomizationStep summarize_step(int step, std::string label, std::vector<double> rhos);

// Step k re-initialises the last k layer groups (counted from the head) of a
// deep copy of `model`. Step 0 compares the original maps with themselves.
// `depth_steps` defaults to every group.
RandomizationReport cascading_randomization(const MapFunction& method, const InstrumentedModel& model,
                                            const std::vector<LabeledImage>& images, std::optional<int> depth_steps,
                                            std::uint64_t seed);

// One step per layer group, re-initialising only that group.
RandomizationReport independent_randomization(const MapFunction& method, const InstrumentedModel& model,
                                              const std::vector<LabeledImage>& images, std::uint64_t seed);

struct TensorDataset {
  torch::Tensor images;  // (N,C,H,W) model space
  torch::Tensor labels;  // (N) int64
  std::int64_t size() const { return images.size(0); }
};

// Seeded shuffle, then the first `train_size` samples and the following
// `test_size` ones.
std::pair<TensorDataset, TensorDataset> split_dataset(const TensorDataset& data, std::int64_t train_size,
                                                      std::int64_t test_size, std::uint64_t seed);

struct TrainingOptions {
  double target_accuracy = 0.95;
  int max_epochs = 200;
  std::int64_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

using NetworkFactory = std::function<std::shared_ptr<StagedCnn>()>;

// Adam on cross-entropy until the training accuracy reaches the target;
// returns the final training accuracy. Throws TrainingBudgetError when
// max_epochs pass without reaching it.
double train_classifier(StagedCnn& network, const TensorDataset& data, const TrainingOptions& options);
double accuracy(StagedCnn& network, const TensorDataset& data);

struct DataRandomizationOptions {
  TrainingOptions training;
  CnnOptions instrument;
  // Number of test images whose maps are compared.
  std::int64_t compare_images = 200;
};

// Trains a twin on true and on permuted labels, then reports the per-image
// rho between their maps on the test set (single step).
RandomizationReport data_randomization(const MapFunction& method, const NetworkFactory& factory,
                                       const TensorDataset& train, const TensorDataset& test,
                                       const DataRandomizationOptions& options);

// CSV of (mode, step, label, rho_mean, rho_std, rho_median) and a line or box
// plot PNG, both written atomically.
void write_randomization_report(const RandomizationReport& report, const std::filesystem::path& csv_path,
                                const std::filesystem::path& plot_path);

}  // namespace iia

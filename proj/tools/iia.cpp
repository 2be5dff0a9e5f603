#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <torch/torch.h>

#include "CLI11.hpp"

#include "iia/errors.hpp"
#include "iia/io/archive.hpp"
#include "iia/io/dataset.hpp"
#include "iia/io/files.hpp"
#include "iia/io/image.hpp"
#include "iia/io/render.hpp"
#include "iia/io/report.hpp"
#include "iia/methods.hpp"
#include "iia/metrics.hpp"
#include "iia/models/small_cnn.hpp"
#include "iia/models/weights.hpp"
#include "iia/models/zoo.hpp"
#include "iia/sanity.hpp"

namespace fs = std::filesystem;
using namespace iia;

namespace {

constexpr int kUsageError = 2;

struct RunConfig {
  std::string model;
  std::vector<std::string> methods;
  int steps = 10;
  std::string class_selector;
  std::string dataset_kind = "image_folder";
  std::string dataset_root;
  std::int64_t subset = -1;
  std::string subset_list;
  std::string labels;
  std::int64_t batch = 100;
  std::string out = "out";
  std::uint64_t seed = 0;
  int workers = 1;
  std::string weights;
  bool sequential = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void log(const std::string& message) { std::cerr << message << std::endl; }

void add_common(CLI::App& app, RunConfig& cfg, bool multi_method) {
  std::vector<std::string> method_names;
  for (auto m : {Method::iia2, Method::iia3, Method::img, Method::act, Method::iia2_lm1, Method::ig, Method::gradcam,
                 Method::rollout}) {
    method_names.emplace_back(to_string(m));
  }
  app.add_option("--model", cfg.model, "model id")->check(CLI::IsMember(model_ids()));
  auto* method = app.add_option("--method", cfg.methods, "explanation method")
                     ->check(CLI::IsMember(method_names))
                     ->allow_extra_args(false);
  if (multi_method) {
    method->delimiter(',');
  } else {
    method->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
  app.add_option("--n", cfg.steps, "interpolation steps per interpolated layer")->check(CLI::PositiveNumber);
  app.add_option("--class", cfg.class_selector, "class selector")->check(CLI::IsMember({"target", "predicted"}));
  app.add_option("--dataset", cfg.dataset_root, "dataset root");
  app.add_option("--dataset-kind", cfg.dataset_kind, "dataset layout")
      ->check(CLI::IsMember({"image_folder", "imagenet_val", "in_seg", "voc_masks", "coco_masks"}));
  app.add_option("--subset", cfg.subset, "keep the first N samples")->check(CLI::NonNegativeNumber);
  app.add_option("--subset-list", cfg.subset_list, "file of sample ids to keep");
  app.add_option("--labels", cfg.labels, "label file (or COCO annotation JSON)");
  app.add_option("--batch", cfg.batch, "max rows per forward/backward pass")->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.out, "output directory");
  app.add_option("--seed", cfg.seed, "seed for random initialisation and sampling");
  app.add_option("--workers", cfg.workers, "worker threads, each with its own model instance")->check(CLI::PositiveNumber);
  app.add_option("--weights", cfg.weights, "safetensors weights for the model");
  app.add_flag("--sequential", cfg.sequential, "evaluate grid points one at a time");
}

std::unique_ptr<InstrumentedModel> load_model(const RunConfig& cfg) {
  if (cfg.model.empty()) throw UsageError("--model is required");
  ModelOptions o;
  o.seed = cfg.seed;
  if (!cfg.weights.empty()) o.weights = cfg.weights;
  return make_model(cfg.model, o);
}

std::vector<Method> resolve_methods(const RunConfig& cfg, Architecture arch, std::vector<Method> fallback) {
  std::vector<Method> out;
  for (const auto& name : cfg.methods) out.push_back(*parse_method(name));
  if (out.empty()) out = std::move(fallback);
  for (auto m : out) {
    if (!supports(m, arch)) {
      throw UsageError(std::string(to_string(m)) + " is not available for " +
                       (arch == Architecture::vit ? "transformer" : "convolutional") + " models");
    }
  }
  return out;
}

std::optional<Dataset> open_dataset(const RunConfig& cfg) {
  if (cfg.dataset_root.empty()) return std::nullopt;
  DatasetSpec spec;
  spec.kind = *parse_dataset_kind(cfg.dataset_kind);
  spec.root = cfg.dataset_root;
  if (cfg.subset >= 0) spec.subset_size = cfg.subset;
  if (!cfg.subset_list.empty()) spec.subset_list = cfg.subset_list;
  if (!cfg.labels.empty()) spec.label_source = cfg.labels;
  return Dataset::open(spec);
}

ExecutionOptions execution(const RunConfig& cfg) { return {cfg.batch, cfg.sequential}; }

std::string safe_id(std::string id) {
  for (auto& c : id) {
    if (c == '/' || c == '\\') c = '_';
  }
  const auto dot = id.rfind('.');
  return dot == std::string::npos ? id : id.substr(0, dot);
}

// Honours SOURCE_DATE_EPOCH so reruns can produce identical archives.
std::string created_stamp() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (!epoch) return "";
  const std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string plan_text(const InstrumentedModel& model, Method method, int steps, ClassSelector selector) {
  if (auto plan = method_plan(method, model, steps, selector)) return plan->describe();
  return std::string(to_string(method)) + " n=" + std::to_string(steps);
}

// Runs `work(model, index)` over [0, count) on `workers` threads, each with
// its own model instance sharing the weights. The first error is rethrown.
void parallel_for(const InstrumentedModel& model, std::size_t count, int workers,
                  const std::function<void(const InstrumentedModel&, std::size_t)>& work) {
  std::atomic<std::size_t> next{0}, done{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto start = std::chrono::steady_clock::now();
  auto body = [&](const InstrumentedModel& m) {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      try {
        work(m, i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
      const auto finished = done.fetch_add(1) + 1;
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::ostringstream os;
      os << "[" << finished << "/" << count << "] " << std::fixed << std::setprecision(2)
         << (secs > 0 ? finished / secs : 0.0) << " images/s";
      log(os.str());
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (n == 1) {
    body(model);
  } else {
    std::vector<std::unique_ptr<InstrumentedModel>> clones;
    for (int w = 0; w < n; ++w) clones.push_back(model.clone(/*share_weights=*/true));
    std::vector<std::thread> threads;
    for (int w = 0; w < n; ++w) threads.emplace_back(body, std::cref(*clones[static_cast<std::size_t>(w)]));
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<ClassSelector> selectors_for(const RunConfig& cfg, bool both_by_default) {
  if (!cfg.class_selector.empty()) return {*parse_class_selector(cfg.class_selector)};
  if (both_by_default) return {ClassSelector::predicted, ClassSelector::target};
  return {ClassSelector::predicted};
}

int class_for(const InstrumentedModel& model, const torch::Tensor& x, ClassSelector selector,
              const std::optional<int>& label, const std::string& id) {
  if (selector == ClassSelector::target && !label) throw DatasetError("sample " + id + " has no label for --class target");
  return resolve_class(model, x, selector, label);
}

// ---- explain ---------------------------------------------------------------

struct ExplainArgs {
  std::vector<std::string> images;
  std::optional<int> label;
};

int cmd_explain(const RunConfig& cfg, const ExplainArgs& args) {
  auto model = load_model(cfg);
  freeze(*model);
  if (cfg.methods.empty()) throw UsageError("--method is required");
  const auto method = resolve_methods(cfg, model->architecture(), {}).front();
  const auto selector = selectors_for(cfg, false).front();

  struct Input {
    std::string id;
    fs::path path;
    std::optional<int> label;
  };
  std::vector<Input> inputs;
  for (const auto& p : args.images) inputs.push_back({fs::path(p).filename().string(), p, args.label});
  std::optional<Dataset> dataset = open_dataset(cfg);
  if (dataset) {
    for (std::size_t i = 0; i < dataset->size(); ++i) inputs.push_back({dataset->id(i), {}, std::nullopt});
  }
  if (inputs.empty()) throw UsageError("explain needs image paths or --dataset");
  fs::create_directories(cfg.out);
  const auto pre = preprocess_for(*model);
  const auto created = created_stamp();
  log("plan " + std::string(to_string(method)) + ": " + plan_text(*model, method, cfg.steps, selector));

  std::vector<std::string> lines(inputs.size());
  parallel_for(*model, inputs.size(), cfg.workers, [&](const InstrumentedModel& m, std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& in = inputs[i];
    torch::Tensor raw;
    std::optional<int> label = in.label;
    if (in.path.empty()) {
      auto sample = dataset->load(i - args.images.size());
      raw = sample.image;
      label = sample.label;
    } else {
      raw = read_image(in.path);
    }
    auto x = preprocess(raw, pre);
    const int y = class_for(m, x, selector, label, in.id);
    auto map = explain(m, x, method, cfg.steps, y, execution(cfg));
    const auto stem = fs::path(cfg.out) / safe_id(in.id);
    save_map(stem, map, {cfg.model, plan_text(m, method, cfg.steps, selector), created});
    write_file_atomic(stem.string() + "_heatmap.png", render_heatmap(map));
    write_file_atomic(stem.string() + "_overlay.png", render_overlay(map, to_display(x, m.normalization())));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << in.id << " class=" << y << " time=" << std::fixed << std::setprecision(2) << secs << "s";
    lines[i] = os.str();
  });
  for (const auto& l : lines) std::cout << l << '\n';
  return 0;
}

// ---- evaluate / ablate -----------------------------------------------------

struct EvaluateArgs {
  bool sic_aic = false;
  std::string from_archives;
  bool save_maps = true;
};

std::string archive_stem(const fs::path& root, const std::string& model, Method method, ClassSelector selector,
                         const std::string& id) {
  return (root / model / std::string(to_string(method)) / std::string(to_string(selector)) / safe_id(id)).string();
}

// Faithfulness metrics for `methods` x `selectors` over the dataset; rows in
// method, selector, metric order.
std::vector<ReportRecord> run_evaluation(const RunConfig& cfg, const InstrumentedModel& model, const Dataset& dataset,
                                         const std::vector<Method>& methods,
                                         const std::vector<ClassSelector>& selectors, const EvaluateArgs& args,
                                         const std::string& name) {
  const auto pre = preprocess_for(model);
  const auto created = created_stamp();
  const std::size_t n = dataset.size();
  const std::size_t combos = methods.size() * selectors.size();
  std::vector<std::vector<MapEvaluation>> results(combos, std::vector<MapEvaluation>(n));
  std::vector<std::vector<double>> sic(combos, std::vector<double>(n)), aic(combos, std::vector<double>(n));
  std::vector<std::string> image_rows(n * combos);
  const fs::path maps_root = fs::path(cfg.out) / "maps";
  for (auto m : methods) log("plan " + std::string(to_string(m)) + ": " + plan_text(model, m, cfg.steps, selectors[0]));

  parallel_for(model, n, cfg.workers, [&](const InstrumentedModel& m, std::size_t i) {
    auto sample = dataset.load(i);
    auto x = preprocess(sample.image, pre);
    for (std::size_t s = 0; s < selectors.size(); ++s) {
      const int y = class_for(m, x, selectors[s], sample.label, sample.id);
      for (std::size_t k = 0; k < methods.size(); ++k) {
        const auto combo = k * selectors.size() + s;
        AttributionMap map;
        if (!args.from_archives.empty()) {
          map = load_map(archive_stem(args.from_archives, cfg.model, methods[k], selectors[s], sample.id));
          if (map.class_index != y) {
            throw CorruptArchive("archived map for " + sample.id + " explains class " +
                                 std::to_string(map.class_index) + ", expected " + std::to_string(y));
          }
        } else {
          map = explain(m, x, methods[k], cfg.steps, y, execution(cfg));
          if (args.save_maps) {
            const auto stem = archive_stem(maps_root, cfg.model, methods[k], selectors[s], sample.id);
            fs::create_directories(fs::path(stem).parent_path());
            save_map(stem, map, {cfg.model, plan_text(m, methods[k], cfg.steps, selectors[s]), created});
          }
        }
        auto& e = results[combo][i];
        e = evaluate_map(m, x, map, y);
        std::ostringstream row;
        row << std::setprecision(17) << sample.id << ',' << to_string(methods[k]) << ',' << to_string(selectors[s])
            << ',' << y << ',' << e.pos << ',' << e.neg << ',' << e.ins << ',' << e.del << ',' << e.full_probability
            << ',' << e.masked_probability;
        if (args.sic_aic) {
          auto r = sic_aic(m, {{x, map, y}});
          sic[combo][i] = r.sic;
          aic[combo][i] = r.aic;
          row << ',' << r.sic << ',' << r.aic;
        }
        image_rows[i * combos + combo] = row.str();
      }
    }
  });

  std::ostringstream per_image;
  per_image << "id,method,selector,class_index,pos,neg,ins,del,full_probability,masked_probability"
            << (args.sic_aic ? ",sic,aic" : "") << '\n';
  for (const auto& r : image_rows) per_image << r << '\n';
  write_file_atomic(fs::path(cfg.out) / (name + "_images.csv"), per_image.str());

  std::vector<ReportRecord> records;
  if (n == 0) return records;
  const auto images = static_cast<std::int64_t>(n);
  for (std::size_t k = 0; k < methods.size(); ++k) {
    for (std::size_t s = 0; s < selectors.size(); ++s) {
      const auto combo = k * selectors.size() + s;
      const auto summary = summarize(results[combo]);
      const std::string method(to_string(methods[k])), sel(to_string(selectors[s]));
      for (const auto& [metric, value] : std::vector<std::pair<std::string, double>>{
               {"POS", summary.pos}, {"NEG", summary.neg}, {"INS", summary.ins}, {"DEL", summary.del},
               {"ADP", summary.adp}, {"PIC", summary.pic}}) {
        records.push_back({cfg.model, method, metric, sel, value, images});
      }
      if (args.sic_aic) {
        double s_mean = 0, a_mean = 0;
        for (std::size_t i = 0; i < n; ++i) {
          s_mean += sic[combo][i];
          a_mean += aic[combo][i];
        }
        records.push_back({cfg.model, method, "SIC", sel, 100.0 * s_mean / static_cast<double>(n), images});
        records.push_back({cfg.model, method, "AIC", sel, 100.0 * a_mean / static_cast<double>(n), images});
      }
    }
  }
  return records;
}

int cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args) {
  auto model = load_model(cfg);
  freeze(*model);
  const auto methods = resolve_methods(cfg, model->architecture(), {Method::iia2, Method::iia3, Method::ig});
  auto dataset = open_dataset(cfg);
  if (!dataset) throw UsageError("evaluate needs --dataset");
  fs::create_directories(cfg.out);
  auto selectors = selectors_for(cfg, true);
  if (cfg.class_selector.empty() && !dataset->labelled()) {
    log("warning: dataset has unlabelled samples; evaluating the predicted class only");
    selectors = {ClassSelector::predicted};
  }
  auto records = run_evaluation(cfg, *model, *dataset, methods, selectors, args, "evaluation");
  write_report(records, fs::path(cfg.out) / "evaluation");
  std::cout << report_markdown(records);
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const EvaluateArgs& args) {
  if (!cfg.methods.empty()) throw UsageError("ablate always runs img, act, iia2, iia3, iia2_lm1 and ig");
  auto model = load_model(cfg);
  freeze(*model);
  auto dataset = open_dataset(cfg);
  if (!dataset) throw UsageError("ablate needs --dataset");
  fs::create_directories(cfg.out);
  auto records = run_evaluation(cfg, *model, *dataset, ablation_methods(), selectors_for(cfg, false), args, "ablation");
  write_report(records, fs::path(cfg.out) / "ablation");
  std::cout << report_markdown(records);
  return 0;
}

// ---- segment-eval ----------------------------------------------------------

int cmd_segment_eval(const RunConfig& cfg) {
  auto model = load_model(cfg);
  freeze(*model);
  const auto methods = resolve_methods(cfg, model->architecture(), {Method::iia2});
  auto dataset = open_dataset(cfg);
  if (!dataset) throw UsageError("segment-eval needs --dataset");
  const auto selector = selectors_for(cfg, false).front();
  fs::create_directories(cfg.out);
  const auto pre = preprocess_for(*model);
  const std::size_t n = dataset->size();
  std::vector<std::vector<SegScore>> scores(methods.size(), std::vector<SegScore>(n));
  std::vector<std::string> ids(n);
  for (auto m : methods) log("plan " + std::string(to_string(m)) + ": " + plan_text(*model, m, cfg.steps, selector));

  parallel_for(*model, n, cfg.workers, [&](const InstrumentedModel& m, std::size_t i) {
    auto sample = dataset->load(i);
    if (sample.mask.empty()) throw DatasetError("sample " + sample.id + " has no mask");
    auto x = preprocess(sample.image, pre);
    auto mask = preprocess_mask(sample.mask, sample.image.size(0), sample.image.size(1), pre);
    const int y = class_for(m, x, selector, sample.label, sample.id);
    ids[i] = sample.id;
    for (std::size_t k = 0; k < methods.size(); ++k) {
      scores[k][i] = segmentation_scores(explain(m, x, methods[k], cfg.steps, y, execution(cfg)), mask);
    }
  });

  std::ostringstream per_sample;
  per_sample << "id,method,pa,ap,miou,mf1\n" << std::setprecision(17);
  std::vector<ReportRecord> records;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    SegScore mean;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = scores[k][i];
      per_sample << ids[i] << ',' << to_string(methods[k]) << ',' << s.pa << ',' << s.ap << ',' << s.miou << ','
                 << s.mf1 << '\n';
      mean.pa += s.pa;
      mean.ap += s.ap;
      mean.miou += s.miou;
      mean.mf1 += s.mf1;
    }
    if (n == 0) continue;
    const double scale = 100.0 / static_cast<double>(n);
    const std::string method(to_string(methods[k])), sel(to_string(selector));
    const auto images = static_cast<std::int64_t>(n);
    records.push_back({cfg.model, method, "PA", sel, mean.pa * scale, images});
    records.push_back({cfg.model, method, "mAP", sel, mean.ap * scale, images});
    records.push_back({cfg.model, method, "mIoU", sel, mean.miou * scale, images});
    records.push_back({cfg.model, method, "mF1", sel, mean.mf1 * scale, images});
  }
  write_file_atomic(fs::path(cfg.out) / "segmentation_samples.csv", per_sample.str());
  write_report(records, fs::path(cfg.out) / "segmentation");
  std::cout << report_markdown(records);
  return 0;
}

// ---- sanity ----------------------------------------------------------------

struct SanityArgs {
  std::string mode;
  std::string mnist;
  std::int64_t images = 50;
  std::int64_t train_size = 4000;
  std::int64_t test_size = 1000;
  int max_epochs = 200;
  double target_accuracy = 0.95;
};

CnnOptions lenet5_options() {
  CnnOptions o;
  o.name = "lenet5";
  o.input_shape = {1, 28, 28};
  o.normalization = Normalization::identity();
  return o;
}

int cmd_sanity(const RunConfig& cfg, const SanityArgs& args) {
  const auto mode = parse_randomization_mode(args.mode);
  if (!mode) throw UsageError("unknown sanity mode '" + args.mode + "' (cascading, independent, data)");
  const std::string model_id = cfg.model.empty() ? "lenet5" : cfg.model;
  Method method = cfg.methods.empty() ? Method::iia2 : *parse_method(cfg.methods.front());
  if (!supports(method, model_architecture(model_id))) throw UsageError(std::string(to_string(method)) + " does not fit " + model_id);
  const int steps = cfg.steps;
  const auto opts = execution(cfg);
  MapFunction map_fn = [method, steps, opts](const InstrumentedModel& m, const torch::Tensor& x, int y) {
    return explain(m, x, method, steps, y, opts);
  };
  fs::create_directories(cfg.out);
  torch::manual_seed(cfg.seed);

  TrainingOptions training;
  training.seed = cfg.seed;
  training.max_epochs = args.max_epochs;
  training.target_accuracy = args.target_accuracy;

  RandomizationReport report;
  if (model_id == "lenet5") {
    auto [images, labels] = read_mnist_csv_gz(args.mnist);
    auto [train, test] = split_dataset({images, labels}, args.train_size, args.test_size, cfg.seed);
    if (*mode == RandomizationMode::data) {
      DataRandomizationOptions o;
      o.training = training;
      o.instrument = lenet5_options();
      o.compare_images = args.images;
      NetworkFactory factory = [] { return std::make_shared<SmallCnnImpl>(lenet5_config()); };
      report = data_randomization(map_fn, factory, train, test, o);
      std::cout << "train accuracy true=" << *report.true_train_accuracy
                << " permuted=" << *report.permuted_train_accuracy << "\ntest accuracy true=" << *report.true_test_accuracy
                << " permuted=" << *report.permuted_test_accuracy << '\n';
    } else {
      auto net = std::make_shared<SmallCnnImpl>(lenet5_config());
      if (!cfg.weights.empty()) {
        load_state(*net, read_safetensors(cfg.weights));
      } else {
        log("training lenet5 on " + std::to_string(train.size()) + " MNIST images");
        train_classifier(*net, train, training);
      }
      auto model = instrument_cnn(net, lenet5_options());
      freeze(*model);
      std::vector<LabeledImage> items;
      for (std::int64_t i = 0; i < std::min(args.images, test.size()); ++i) {
        items.push_back({test.images[i], static_cast<int>(test.labels[i].item<std::int64_t>())});
      }
      report = *mode == RandomizationMode::cascading ? cascading_randomization(map_fn, *model, items, std::nullopt, cfg.seed)
                                                     : independent_randomization(map_fn, *model, items, cfg.seed);
    }
  } else {
    if (*mode == RandomizationMode::data) throw UsageError("data randomization trains lenet5 on MNIST; use --model lenet5");
    RunConfig c = cfg;
    c.model = model_id;
    auto model = load_model(c);
    freeze(*model);
    auto dataset = open_dataset(cfg);
    if (!dataset) throw UsageError("sanity on " + model_id + " needs --dataset");
    const auto pre = preprocess_for(*model);
    std::vector<LabeledImage> items;
    for (std::size_t i = 0; i < dataset->size() && static_cast<std::int64_t>(i) < args.images; ++i) {
      auto sample = dataset->load(i);
      auto x = preprocess(sample.image, pre);
      items.push_back({x, class_for(*model, x, selectors_for(cfg, false).front(), sample.label, sample.id)});
    }
    report = *mode == RandomizationMode::cascading ? cascading_randomization(map_fn, *model, items, std::nullopt, cfg.seed)
                                                   : independent_randomization(map_fn, *model, items, cfg.seed);
  }
  report.seed = cfg.seed;
  const auto stem = fs::path(cfg.out) / ("sanity_" + to_string(*mode));
  write_randomization_report(report, stem.string() + ".csv", stem.string() + ".png");
  for (const auto& s : report.steps) {
    std::cout << to_string(*mode) << " step " << s.step << " (" << s.label << ") rho mean " << format_fixed(s.mean, 4)
              << " median " << format_fixed(s.median, 4) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterated integrated attributions"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags take precedence");

  RunConfig cfg;
  ExplainArgs explain_args;
  EvaluateArgs eval_args;
  SanityArgs sanity_args;
#ifdef IIA_DEFAULT_MNIST
  sanity_args.mnist = IIA_DEFAULT_MNIST;
#endif

  auto* explain_cmd = app.add_subcommand("explain", "write maps and renders for images");
  add_common(*explain_cmd, cfg, false);
  explain_cmd->add_option("images", explain_args.images, "image files");
  explain_cmd->add_option("--label", explain_args.label, "label for --class target");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "faithfulness metrics over a dataset");
  add_common(*evaluate_cmd, cfg, true);
  evaluate_cmd->add_flag("--sic-aic", eval_args.sic_aic, "also compute SIC and AIC");
  evaluate_cmd->add_option("--from-archives", eval_args.from_archives, "read maps from this archive root");
  evaluate_cmd->add_flag("!--no-save-maps", eval_args.save_maps, "do not persist the maps");

  auto* segment_cmd = app.add_subcommand("segment-eval", "segmentation scores against masks");
  add_common(*segment_cmd, cfg, true);

  auto* sanity_cmd = app.add_subcommand("sanity", "randomization sanity checks");
  add_common(*sanity_cmd, cfg, false);
  sanity_cmd->add_option("--mode", sanity_args.mode, "cascading, independent or data")->required();
  sanity_cmd->add_option("--mnist", sanity_args.mnist, "MNIST csv.gz (784 pixels + label per row)");
  sanity_cmd->add_option("--images", sanity_args.images, "images whose maps are compared");
  sanity_cmd->add_option("--train-size", sanity_args.train_size, "MNIST training split size");
  sanity_cmd->add_option("--test-size", sanity_args.test_size, "MNIST test split size");
  sanity_cmd->add_option("--max-epochs", sanity_args.max_epochs, "training budget");
  sanity_cmd->add_option("--target-accuracy", sanity_args.target_accuracy, "training accuracy bar");

  auto* ablate_cmd = app.add_subcommand("ablate", "compare img, act, iia2, iia3, iia2_lm1 and ig");
  add_common(*ablate_cmd, cfg, true);
  ablate_cmd->add_flag("--sic-aic", eval_args.sic_aic, "also compute SIC and AIC");
  ablate_cmd->add_flag("!--no-save-maps", eval_args.save_maps, "do not persist the maps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*explain_cmd) return cmd_explain(cfg, explain_args);
    if (*evaluate_cmd) return cmd_evaluate(cfg, eval_args);
    if (*segment_cmd) return cmd_segment_eval(cfg);
    if (*sanity_cmd) return cmd_sanity(cfg, sanity_args);
    if (*ablate_cmd) return cmd_ablate(cfg, eval_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsageError;
}

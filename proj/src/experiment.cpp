#include "asymseg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "asymseg/rng.hpp"

namespace asymseg {

using nlohmann::json;

void ExperimentConfig::resolve() {
  data.seed = derive_seed(seed, "data");
  train.seed = derive_seed(seed, "train");
  model.input_dim =
      static_cast<std::size_t>(data.patch_size) * static_cast<std::size_t>(data.patch_size);
}

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  std::size_t expected =
      static_cast<std::size_t>(data.patch_size) * static_cast<std::size_t>(data.patch_size);
  if (model.input_dim != expected)
    throw ConfigError("config: model.input_dim " + std::to_string(model.input_dim) +
                      " does not match patch_size^2 = " + std::to_string(expected));
}

json to_json(const ExperimentConfig& c) {
  return json{{"seed", c.seed},
              {"data", to_json(c.data)},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"analysis", json{{"emit_joint_histograms", c.analysis.emit_joint_histograms}}},
              {"out_dir", c.out_dir},
              {"preset", c.preset}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "seed" && key != "data" && key != "model" && key != "train" &&
        key != "analysis" && key != "out_dir" && key != "preset")
      throw ConfigError("config: unknown key '" + key + "'");
  }
  ExperimentConfig c;
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("data")) c.data = synth_config_from_json(j.at("data"));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    for (const auto& [key, value] : a.items()) {
      (void)value;
      if (key != "emit_joint_histograms")
        throw ConfigError("config.analysis: unknown key '" + key + "'");
    }
    if (a.contains("emit_joint_histograms"))
      c.analysis.emit_joint_histograms = a.at("emit_joint_histograms").get<bool>();
  }
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("preset")) c.preset = j.at("preset").get<std::string>();

  // Section seeds fall back to derivation from the global seed; explicit
  // values win.
  if (!j.contains("data") || !j.at("data").contains("seed"))
    c.data.seed = derive_seed(c.seed, "data");
  if (!j.contains("train") || !j.at("train").contains("seed"))
    c.train.seed = derive_seed(c.seed, "train");
  if (!j.contains("model") || !j.at("model").contains("input_dim"))
    c.model.input_dim = static_cast<std::size_t>(c.data.patch_size) *
                        static_cast<std::size_t>(c.data.patch_size);
  return c;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "vanilla-ce",
      "vanilla-dsc",
      "vanilla-ce-80-tumor",
      "large-margin-loss",
      "asymmetric-large-margin-loss",
      "focal-loss",
      "asymmetric-focal-loss",
      "adversarial-training",
      "asymmetric-adversarial-training",
      "mixup",
      "asymmetric-mixup",
      "asymmetric-combination",
  };
  return names;
}

void apply_preset(ExperimentConfig& config, const std::string& name) {
  LossConfig& loss = config.train.loss;
  loss.variant = LossVariant::kCrossEntropy;
  loss.asymmetric = false;
  loss.combine.clear();
  config.train.class_sampling_ratio = 0.5;

  if (name == "vanilla-ce") {
  } else if (name == "vanilla-dsc") {
    loss.variant = LossVariant::kSoftDice;
  } else if (name == "vanilla-ce-80-tumor") {
    config.train.class_sampling_ratio = 0.8;
  } else if (name == "large-margin-loss") {
    loss.variant = LossVariant::kLargeMargin;
  } else if (name == "asymmetric-large-margin-loss") {
    loss.variant = LossVariant::kLargeMargin;
    loss.asymmetric = true;
  } else if (name == "focal-loss") {
    loss.variant = LossVariant::kFocal;
  } else if (name == "asymmetric-focal-loss") {
    loss.variant = LossVariant::kFocal;
    loss.asymmetric = true;
  } else if (name == "adversarial-training") {
    loss.variant = LossVariant::kAdversarial;
  } else if (name == "asymmetric-adversarial-training") {
    loss.variant = LossVariant::kAdversarial;
    loss.asymmetric = true;
  } else if (name == "mixup") {
    loss.variant = LossVariant::kMixup;
  } else if (name == "asymmetric-mixup") {
    loss.variant = LossVariant::kMixup;
    loss.asymmetric = true;
  } else if (name == "asymmetric-combination") {
    loss.asymmetric = true;
    loss.combine = {LossVariant::kLargeMargin, LossVariant::kFocal,
                    LossVariant::kAdversarial, LossVariant::kMixup};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  config.preset = name;
}

namespace {

void flatten_json(const json& j, const std::string& prefix,
                  std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [key, value] : j.items())
      flatten_json(value, prefix.empty() ? key : prefix + "." + key, out);
  } else {
    out[prefix] = j.dump();
  }
}

std::string make_config_key(json data_json, json train_json, const json& model_json) {
  data_json.erase("seed");
  train_json.erase("seed");
  train_json.erase("data_fraction");
  json full{{"data", data_json}, {"model", model_json}, {"train", train_json}};
  std::map<std::string, std::string> flat;
  flatten_json(full, "", flat);
  std::string key;
  for (const auto& [field, value] : flat) key += field + "=" + value + "\n";
  return key;
}

std::string fmt_rate(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_rate(const std::optional<double>& v) {
  return v ? fmt_rate(*v) : "nan";
}

std::string fmt_fraction(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

const char* group_key(int cls, int split_index) {
  static const char* keys[2][2] = {{"background_train", "background_test"},
                                   {"foreground_train", "foreground_test"}};
  return keys[cls][split_index];
}

}  // namespace

std::string config_key(const ExperimentConfig& config) {
  return make_config_key(to_json(config.data), to_json(config.train), to_json(config.model));
}

Dataset build_dataset(const ExperimentConfig& config) {
  config.data.validate();
  return generate_dataset(config.data);
}

RunOutcome run_pipeline(const Dataset& dataset, const ExperimentConfig& config) {
  config.validate();
  std::uint64_t want = dataset_config_hash(config.data);
  std::uint64_t have = dataset_config_hash(dataset.config);
  if (want != have)
    throw FingerprintError("dataset fingerprint " + hex64(have) +
                           " does not match config fingerprint " + hex64(want));

  RunOutcome out;
  out.model = train_model(dataset, config.model, config.train);
  out.model.dataset_hash = have;
  out.model.fingerprint = model_fingerprint(config.model, config.train, have);

  DenseNet net = out.model.network();
  out.train_eval = evaluate_cases(net, dataset, training_case_ids(dataset, config.train),
                                  dataset.config.patch_size);
  out.test_eval = evaluate_split(net, dataset, Split::kTest, dataset.config.patch_size);

  std::vector<Sample> train_samples = training_samples(dataset, config.train, &out.warnings);
  out.shift = shift_statistic(collect_logits(net, train_samples, dataset.test.samples));
  return out;
}

RunSummary summarize_run(const ExperimentConfig& config, const RunOutcome& outcome) {
  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  RunSummary s;
  s.fraction = config.train.data_fraction;
  s.seed = config.seed;
  s.preset = config.preset.empty() ? variant_name(config.train.loss.variant) : config.preset;
  s.train_dsc = outcome.train_eval.dsc.value_or(kNan);
  s.test_dsc = outcome.test_eval.dsc.value_or(kNan);
  s.test_sensitivity = outcome.test_eval.sensitivity.value_or(kNan);
  s.test_precision = outcome.test_eval.precision.value_or(kNan);
  s.delta_bg = outcome.shift.delta[0];
  s.delta_fg = outcome.shift.delta[1];
  s.config_key = config_key(config);
  return s;
}

json shift_json(const ShiftReport& report) {
  json groups = json::object();
  for (int cls = 0; cls < 2; ++cls)
    for (int sp = 0; sp < 2; ++sp) {
      const LogitGroup& g = report.groups[cls][sp];
      json entry{{"count", g.count}};
      entry["mean_true_logit"] = g.defined() ? json(g.mean_true_logit()) : json(nullptr);
      groups[group_key(cls, sp)] = entry;
    }
  json delta = json::object();
  delta["background"] = report.delta[0] ? json(*report.delta[0]) : json(nullptr);
  delta["foreground"] = report.delta[1] ? json(*report.delta[1]) : json(nullptr);
  return json{{"schema_version", 1},
              {"projection", "true_class_logit"},
              {"groups", groups},
              {"delta", delta}};
}

json histogram_json(const ShiftReport& report, bool joint) {
  json groups = json::object();
  for (int cls = 0; cls < 2; ++cls)
    for (int sp = 0; sp < 2; ++sp) {
      const LogitGroup& g = report.groups[cls][sp];
      json entry{{"count", g.count},
                 {"z0", g.z0.counts},
                 {"z1", g.z1.counts},
                 {"true_logit", g.true_logit.counts}};
      if (joint) {
        json rows = json::array();
        for (int b0 = 0; b0 < LogitHistogram::kBins; ++b0) {
          json row = json::array();
          for (int b1 = 0; b1 < LogitHistogram::kBins; ++b1)
            row.push_back(g.joint[static_cast<std::size_t>(b0) * LogitHistogram::kBins +
                                  static_cast<std::size_t>(b1)]);
          rows.push_back(std::move(row));
        }
        entry["joint_z0_z1"] = std::move(rows);
      }
      groups[group_key(cls, sp)] = std::move(entry);
    }
  return json{{"schema_version", 1},
              {"bin_spec", json{{"lo", LogitHistogram::kLo},
                                {"hi", LogitHistogram::kHi},
                                {"width", LogitHistogram::kWidth},
                                {"n_bins", LogitHistogram::kBins},
                                {"underflow_overflow", true}}},
              {"groups", groups}};
}

std::string metrics_summary_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::string out = "split,DSC,SENS,PRC\n";
  for (const auto& [split, report] : rows)
    out += split + "," + fmt_rate(report.dsc) + "," + fmt_rate(report.sensitivity) + "," +
           fmt_rate(report.precision) + "\n";
  return out;
}

std::string metrics_per_case_csv(const std::string& split, const EvalReport& report) {
  std::string out = "case_id,split,DSC,SENS,PRC\n";
  for (const CaseMetrics& c : report.per_case)
    out += std::to_string(c.case_id) + "," + split + "," + fmt_rate(c.metrics.dsc) + "," +
           fmt_rate(c.metrics.sensitivity) + "," + fmt_rate(c.metrics.precision) + "\n";
  return out;
}

std::string runs_csv(const std::vector<RunSummary>& runs) {
  std::string out = "preset,fraction,seed,train_DSC,test_DSC,test_SENS,test_PRC,delta_fg,delta_bg\n";
  for (const RunSummary& r : runs) {
    char seed_buf[32];
    std::snprintf(seed_buf, sizeof(seed_buf), "%" PRIu64, r.seed);
    out += r.preset + "," + fmt_fraction(r.fraction) + "," + seed_buf + "," +
           fmt_rate(r.train_dsc) + "," + fmt_rate(r.test_dsc) + "," +
           fmt_rate(r.test_sensitivity) + "," + fmt_rate(r.test_precision) + "," +
           fmt_rate(r.delta_fg) + "," + fmt_rate(r.delta_bg) + "\n";
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "fraction,n_seeds,train_DSC,test_DSC,test_SENS,test_PRC,delta_fg,delta_bg\n";
  for (const SweepRow& r : rows)
    out += fmt_fraction(r.fraction) + "," + std::to_string(r.n_seeds) + "," +
           fmt_rate(r.train_dsc) + "," + fmt_rate(r.test_dsc) + "," +
           fmt_rate(r.test_sensitivity) + "," + fmt_rate(r.test_precision) + "," +
           fmt_rate(r.delta_fg) + "," + fmt_rate(r.delta_bg) + "\n";
  return out;
}

void cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.data.validate();
  ensure_dir(out_dir);
  Dataset ds = generate_dataset(config.data);
  save_dataset(ds, out_dir / "dataset.bin");
  write_text_file(out_dir / "manifest.json", dataset_manifest(ds).dump(2) + "\n");
  write_text_file(out_dir / "resolved_config.json", to_json(config).dump(2) + "\n");
  for (const std::string& w : ds.train.warnings) std::fprintf(stderr, "W_DATA: %s\n", w.c_str());
}

void cmd_train(const ExperimentConfig& config, const std::filesystem::path& dataset_file,
               const std::filesystem::path& out_dir) {
  config.validate();
  Dataset ds = load_dataset(dataset_file);
  std::uint64_t want = dataset_config_hash(config.data);
  std::uint64_t have = dataset_config_hash(ds.config);
  if (want != have)
    throw FingerprintError("dataset fingerprint " + hex64(have) +
                           " does not match config fingerprint " + hex64(want));
  ensure_dir(out_dir);
  TrainedModel model = train_model(ds, config.model, config.train);
  model.dataset_hash = have;
  model.fingerprint = model_fingerprint(config.model, config.train, have);
  save_model(model, out_dir / "model.bin");
  write_text_file(out_dir / "loss_trace.csv", loss_trace_csv(model.loss_trace));
  write_text_file(out_dir / "resolved_config.json", to_json(config).dump(2) + "\n");
}

void cmd_evaluate(const std::filesystem::path& model_file,
                  const std::filesystem::path& dataset_file, const std::string& split,
                  const std::filesystem::path& out_dir) {
  if (split != "train" && split != "test")
    throw ConfigError("evaluate: split must be 'train' or 'test', got '" + split + "'");
  TrainedModel model = load_model(model_file);
  Dataset ds = load_dataset(dataset_file);
  if (model.dataset_hash != dataset_config_hash(ds.config))
    throw FingerprintError("model was trained on dataset " + hex64(model.dataset_hash) +
                           ", got " + hex64(dataset_config_hash(ds.config)));
  ensure_dir(out_dir);
  DenseNet net = model.network();
  EvalReport report =
      split == "test"
          ? evaluate_split(net, ds, Split::kTest, ds.config.patch_size)
          : evaluate_cases(net, ds, training_case_ids(ds, model.train_config),
                           ds.config.patch_size);
  write_text_file(out_dir / "metrics_summary.csv", metrics_summary_csv({{split, report}}));
  write_text_file(out_dir / "metrics_per_case.csv", metrics_per_case_csv(split, report));
}

void cmd_analyze(const std::vector<std::pair<std::filesystem::path, std::filesystem::path>>&
                     model_dataset_pairs,
                 const std::filesystem::path& out_dir, bool joint_histograms) {
  if (model_dataset_pairs.empty()) throw ContractError("analyze: at least one pair required");
  ensure_dir(out_dir);
  std::vector<RunSummary> summaries;
  for (std::size_t i = 0; i < model_dataset_pairs.size(); ++i) {
    const auto& [model_file, dataset_file] = model_dataset_pairs[i];
    TrainedModel model = load_model(model_file);
    Dataset ds = load_dataset(dataset_file);
    if (model.dataset_hash != dataset_config_hash(ds.config))
      throw FingerprintError("model was trained on dataset " + hex64(model.dataset_hash) +
                             ", got " + hex64(dataset_config_hash(ds.config)));
    DenseNet net = model.network();
    std::vector<Sample> train_samples = training_samples(ds, model.train_config);
    ShiftReport shift = shift_statistic(collect_logits(net, train_samples, ds.test.samples));
    write_text_file(out_dir / ("shift_" + std::to_string(i) + ".json"),
                    shift_json(shift).dump(2) + "\n");
    write_text_file(out_dir / ("histograms_" + std::to_string(i) + ".json"),
                    histogram_json(shift, joint_histograms).dump(2) + "\n");

    EvalReport train_eval = evaluate_cases(net, ds, training_case_ids(ds, model.train_config),
                                           ds.config.patch_size);
    EvalReport test_eval = evaluate_split(net, ds, Split::kTest, ds.config.patch_size);
    constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
    RunSummary s;
    s.fraction = model.train_config.data_fraction;
    s.seed = model.train_config.seed;
    s.preset = variant_name(model.train_config.loss.variant);
    if (!model.train_config.loss.combine.empty()) s.preset = "combined";
    s.train_dsc = train_eval.dsc.value_or(kNan);
    s.test_dsc = test_eval.dsc.value_or(kNan);
    s.test_sensitivity = test_eval.sensitivity.value_or(kNan);
    s.test_precision = test_eval.precision.value_or(kNan);
    s.delta_bg = shift.delta[0];
    s.delta_fg = shift.delta[1];
    s.config_key = make_config_key(to_json(ds.config), to_json(model.train_config),
                                   to_json(model.model_config));
    summaries.push_back(std::move(s));
  }
  write_text_file(out_dir / "runs.csv", runs_csv(summaries));
  write_text_file(out_dir / "sweep.csv", sweep_csv(fraction_sweep_report(summaries)));
}

void cmd_sweep(const ExperimentConfig& base, const SweepRequest& request,
               const std::filesystem::path& out_dir) {
  if (request.presets.empty() || request.fractions.empty() || request.seeds.empty())
    throw ConfigError("sweep: presets, fractions and seeds must all be non-empty");
  if (request.jobs < 1) throw ConfigError("sweep: jobs must be positive");
  for (const std::string& name : request.presets)
    if (std::find(preset_names().begin(), preset_names().end(), name) == preset_names().end())
      throw ConfigError("unknown preset '" + name + "'");
  for (double f : request.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep: fraction must lie in (0, 1]");
  ensure_dir(out_dir);

  // One dataset per seed, shared read-only by that seed's jobs.
  std::map<std::uint64_t, Dataset> datasets;
  for (std::uint64_t seed : request.seeds) {
    if (datasets.count(seed)) continue;
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    cfg.resolve();
    datasets.emplace(seed, build_dataset(cfg));
  }

  struct Job {
    ExperimentConfig config;
    std::filesystem::path dir;
  };
  std::vector<Job> jobs;
  for (const std::string& preset : request.presets)
    for (double fraction : request.fractions)
      for (std::uint64_t seed : request.seeds) {
        ExperimentConfig cfg = base;
        apply_preset(cfg, preset);
        cfg.seed = seed;
        cfg.train.data_fraction = fraction;
        cfg.resolve();
        char seed_buf[32];
        std::snprintf(seed_buf, sizeof(seed_buf), "seed_%" PRIu64, seed);
        jobs.push_back({std::move(cfg), out_dir / preset /
                                            ("fraction_" + fmt_fraction(fraction)) / seed_buf});
      }

  std::vector<RunSummary> summaries(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const Job& job = jobs[i];
        const Dataset& ds = datasets.at(job.config.seed);
        RunOutcome outcome = run_pipeline(ds, job.config);
        ensure_dir(job.dir);
        save_model(outcome.model, job.dir / "model.bin");
        write_text_file(job.dir / "loss_trace.csv", loss_trace_csv(outcome.model.loss_trace));
        write_text_file(job.dir / "resolved_config.json",
                        to_json(job.config).dump(2) + "\n");
        write_text_file(job.dir / "metrics_summary.csv",
                        metrics_summary_csv(
                            {{"train", outcome.train_eval}, {"test", outcome.test_eval}}));
        write_text_file(job.dir / "metrics_per_case.csv",
                        metrics_per_case_csv("test", outcome.test_eval));
        write_text_file(job.dir / "shift.json", shift_json(outcome.shift).dump(2) + "\n");
        write_text_file(
            job.dir / "histograms.json",
            histogram_json(outcome.shift, job.config.analysis.emit_joint_histograms).dump(2) +
                "\n");
        summaries[i] = summarize_run(job.config, outcome);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(request.jobs),
                                                jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  write_text_file(out_dir / "runs.csv", runs_csv(summaries));
  for (const std::string& preset : request.presets) {
    std::vector<RunSummary> of_preset;
    for (const RunSummary& s : summaries)
      if (s.preset == preset) of_preset.push_back(s);
    write_text_file(out_dir / ("sweep_" + preset + ".csv"),
                    sweep_csv(fraction_sweep_report(of_preset)));
  }
}

}  // namespace asymseg

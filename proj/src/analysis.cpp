#include "asymseg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace asymseg {

int LogitHistogram::bin_of(double v) {
  if (v < kLo) return 0;
  if (v >= kHi) return kBins - 1;
  return 1 + static_cast<int>((v - kLo) / kWidth);
}

std::int64_t LogitHistogram::total() const {
  std::int64_t s = 0;
  for (std::int64_t c : counts) s += c;
  return s;
}

double LogitGroup::mean_true_logit() const {
  if (count == 0) throw ContractError("LogitGroup: mean of an empty group");
  return sum_true_logit / static_cast<double>(count);
}

std::vector<LogitRecord> collect_logits(const DenseNet& net,
                                        const std::vector<Sample>& train_samples,
                                        const std::vector<Sample>& test_samples) {
  if (train_samples.empty() || test_samples.empty())
    throw ContractError("collect_logits: both splits must be non-empty");
  std::vector<LogitRecord> records;
  records.reserve(train_samples.size() + test_samples.size());
  auto run = [&](const std::vector<Sample>& samples, Split split) {
    Prediction p = predict(net, samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      LogitRecord r;
      r.z0 = p.logits[i * 2];
      r.z1 = p.logits[i * 2 + 1];
      r.true_class = samples[i].label;
      r.split = split;
      r.case_id = samples[i].case_id;
      records.push_back(r);
    }
  };
  run(train_samples, Split::kTrain);
  run(test_samples, Split::kTest);
  return records;
}

ShiftReport shift_statistic(const std::vector<LogitRecord>& records) {
  ShiftReport report;
  for (const LogitRecord& r : records) {
    if (r.true_class != 0 && r.true_class != 1)
      throw ContractError("shift_statistic: true_class must be 0 or 1");
    LogitGroup& g =
        report.groups[static_cast<std::size_t>(r.true_class)][r.split == Split::kTest ? 1 : 0];
    double true_logit = r.true_class == 1 ? r.z1 : r.z0;
    ++g.count;
    g.sum_true_logit += true_logit;
    g.z0.add(r.z0);
    g.z1.add(r.z1);
    g.true_logit.add(true_logit);
    std::size_t b0 = static_cast<std::size_t>(LogitHistogram::bin_of(r.z0));
    std::size_t b1 = static_cast<std::size_t>(LogitHistogram::bin_of(r.z1));
    ++g.joint[b0 * LogitHistogram::kBins + b1];
  }
  for (int cls = 0; cls < 2; ++cls) {
    const LogitGroup& train = report.groups[static_cast<std::size_t>(cls)][0];
    const LogitGroup& test = report.groups[static_cast<std::size_t>(cls)][1];
    if (train.defined() && test.defined())
      report.delta[static_cast<std::size_t>(cls)] =
          std::abs(test.mean_true_logit()) - std::abs(train.mean_true_logit());
  }
  return report;
}

MetricsReport MetricsReport::from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                         std::int64_t tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0)
    throw ContractError("metrics: negative confusion count");
  MetricsReport m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  if (tp + fn > 0) m.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fp + fn > 0)
    m.dsc = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  return m;
}

MetricsReport segmentation_metrics(const std::vector<int>& predicted,
                                   const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    throw ShapeError("segmentation_metrics: " + std::to_string(predicted.size()) +
                     " predictions vs " + std::to_string(truth.size()) + " labels");
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if ((predicted[i] != 0 && predicted[i] != 1) || (truth[i] != 0 && truth[i] != 1))
      throw ContractError("segmentation_metrics: labels must be 0 or 1");
    if (predicted[i] == 1)
      (truth[i] == 1 ? tp : fp)++;
    else
      (truth[i] == 1 ? fn : tn)++;
  }
  return MetricsReport::from_counts(tp, fp, fn, tn);
}

double dsc_from_rates(double sensitivity, double precision) {
  if (sensitivity + precision <= 0.0)
    throw ContractError("dsc_from_rates: rates sum to zero");
  return 2.0 * sensitivity * precision / (sensitivity + precision);
}

EvalReport evaluate_cases(const DenseNet& net, const Dataset& dataset,
                          const std::vector<int>& case_ids, int patch_size) {
  if (case_ids.empty()) throw ContractError("evaluate_cases: no cases");
  EvalReport report;
  const int h = patch_margin(patch_size);
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (int id : case_ids) {
    const CaseImage& img = dataset.case_by_id(id);
    int side = img.size - 2 * h;
    std::vector<double> x;
    std::vector<int> truth;
    x.reserve(static_cast<std::size_t>(side) * side * net.config().input_dim);
    truth.reserve(static_cast<std::size_t>(side) * side);
    for (int cy = h; cy < img.size - h; ++cy)
      for (int cx = h; cx < img.size - h; ++cx) {
        std::vector<double> patch = cut_patch(img, cx, cy, patch_size);
        x.insert(x.end(), patch.begin(), patch.end());
        truth.push_back(img.mask[static_cast<std::size_t>(cy) * img.size + cx] != 0 ? 1 : 0);
      }
    Prediction p = predict_matrix(net, x, truth.size());
    MetricsReport m = segmentation_metrics(p.labels, truth);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
    tn += m.tn;
    report.per_case.push_back({id, m});
  }
  report.pooled = MetricsReport::from_counts(tp, fp, fn, tn);

  auto mean_defined = [&](auto getter) -> std::optional<double> {
    double s = 0.0;
    std::size_t n = 0;
    for (const CaseMetrics& c : report.per_case)
      if (auto v = getter(c.metrics)) {
        s += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  };
  report.dsc = mean_defined([](const MetricsReport& m) { return m.dsc; });
  report.sensitivity = mean_defined([](const MetricsReport& m) { return m.sensitivity; });
  report.precision = mean_defined([](const MetricsReport& m) { return m.precision; });
  return report;
}

EvalReport evaluate_split(const DenseNet& net, const Dataset& dataset, Split split,
                          int patch_size) {
  std::vector<int> ids;
  for (const CaseImage& c : dataset.cases)
    if (c.split == split) ids.push_back(c.case_id);
  if (ids.empty())
    throw ContractError(std::string("evaluate_split: dataset has no ") + split_name(split) +
                        " cases");
  return evaluate_cases(net, dataset, ids, patch_size);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median: empty input");
  std::sort(values.begin(), values.end());
  std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

// config_key is a newline-separated list of "field=value" entries.
std::map<std::string, std::string> parse_config_key(const std::string& key) {
  std::map<std::string, std::string> fields;
  std::size_t pos = 0;
  while (pos < key.size()) {
    std::size_t end = key.find('\n', pos);
    if (end == std::string::npos) end = key.size();
    std::string line = key.substr(pos, end - pos);
    std::size_t eq = line.find('=');
    if (eq != std::string::npos) fields[line.substr(0, eq)] = line.substr(eq + 1);
    pos = end + 1;
  }
  return fields;
}

}  // namespace

std::vector<SweepRow> fraction_sweep_report(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw ContractError("fraction_sweep_report: no runs");
  auto reference = parse_config_key(runs.front().config_key);
  for (const RunSummary& r : runs) {
    if (r.config_key == runs.front().config_key) continue;
    auto other = parse_config_key(r.config_key);
    std::string differing;
    for (const auto& [field, value] : reference) {
      auto it = other.find(field);
      if (it == other.end() || it->second != value)
        differing += (differing.empty() ? "" : ", ") + field;
    }
    for (const auto& [field, value] : other)
      if (!reference.count(field)) differing += (differing.empty() ? "" : ", ") + field;
    throw ContractError("fraction_sweep_report: runs differ beyond fraction/seed in: " +
                        (differing.empty() ? std::string("<unknown>") : differing));
  }

  std::map<double, std::vector<const RunSummary*>> by_fraction;
  for (const RunSummary& r : runs) by_fraction[r.fraction].push_back(&r);

  std::vector<SweepRow> rows;
  for (const auto& [fraction, group] : by_fraction) {
    SweepRow row;
    row.fraction = fraction;
    row.n_seeds = group.size();
    auto med = [&](auto getter) {
      std::vector<double> v;
      for (const RunSummary* r : group) {
        double value = getter(*r);
        if (std::isfinite(value)) v.push_back(value);
      }
      if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
      return median(std::move(v));
    };
    row.train_dsc = med([](const RunSummary& r) { return r.train_dsc; });
    row.test_dsc = med([](const RunSummary& r) { return r.test_dsc; });
    row.test_sensitivity = med([](const RunSummary& r) { return r.test_sensitivity; });
    row.test_precision = med([](const RunSummary& r) { return r.test_precision; });
    auto med_opt = [&](auto getter) -> std::optional<double> {
      std::vector<double> v;
      for (const RunSummary* r : group)
        if (auto value = getter(*r)) v.push_back(*value);
      if (v.empty()) return std::nullopt;
      return median(std::move(v));
    };
    row.delta_fg = med_opt([](const RunSummary& r) { return r.delta_fg; });
    row.delta_bg = med_opt([](const RunSummary& r) { return r.delta_bg; });
    rows.push_back(row);
  }
  return rows;
}

}  // namespace asymseg

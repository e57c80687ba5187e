#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "chartab/error.hpp"
#include "chartab/pipeline.hpp"

namespace chartab::pipeline {

using models::ModelBundle;
using models::Task;

namespace {

constexpr std::size_t kEvalBatch = 256;

// Raw network outputs, one row of output_width values per input row.
std::vector<double> raw_outputs(const ModelBundle& bundle, std::span<const RawExample> rows) {
  engine::NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(rows.size() * bundle.output_width());
  for (std::size_t start = 0; start < rows.size(); start += kEvalBatch) {
    const std::size_t end = std::min(rows.size(), start + kEvalBatch);
    std::vector<encoding::EncodedExample> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(models::encode_row(bundle, rows[i]));
    const engine::Tensor y = models::forward(bundle, batch);
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

}  // namespace

std::vector<double> predict(const ModelBundle& bundle, std::span<const RawExample> rows) {
  if (bundle.task != Task::regression) throw DataError("predict needs a regression bundle");
  auto out = raw_outputs(bundle, rows);
  for (double& v : out) v = v * bundle.target_scale + bundle.target_shift;
  return out;
}

std::vector<std::vector<double>> predict_proba(const ModelBundle& bundle,
                                               std::span<const RawExample> rows) {
  if (bundle.task != Task::classification) {
    throw DataError("predict_proba needs a classification bundle");
  }
  const auto logits = raw_outputs(bundle, rows);
  const std::size_t c = bundle.output_width();
  std::vector<std::vector<double>> out(rows.size(), std::vector<double>(c));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* row = logits.data() + i * c;
    const double peak = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - peak);
    for (std::size_t j = 0; j < c; ++j) out[i][j] = std::exp(row[j] - peak) / z;
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw DataError("pearson needs equal non-empty series");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

MetricsReport evaluate(const ModelBundle& bundle, std::span<const RawExample> rows) {
  if (rows.empty()) throw DataError("evaluate on an empty set");
  for (const auto& r : rows) {
    if (!r.target) throw DataError("evaluation row without a target");
  }
  MetricsReport report;
  report.task = bundle.task;
  report.count = rows.size();
  const double n = static_cast<double>(rows.size());

  if (bundle.task == Task::regression) {
    const auto pred = predict(bundle, rows);
    std::vector<double> truth;
    double l1 = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      truth.push_back(*rows[i].target);
      l1 += std::abs(pred[i] - truth[i]);
      report.pairs.emplace_back(pred[i], truth[i]);
    }
    report.mean_l1 = l1 / n;
    report.loss = report.mean_l1;
    report.pearson = pearson(pred, truth);
    return report;
  }

  const auto proba = predict_proba(bundle, rows);
  const std::size_t c = bundle.output_width();
  report.class_counts.assign(c, 0);
  report.class_correct.assign(c, 0);
  double ce = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto label = static_cast<std::size_t>(*rows[i].target);
    if (label >= c) throw DataError("class index out of range for this bundle");
    const auto predicted = static_cast<std::size_t>(
        std::max_element(proba[i].begin(), proba[i].end()) - proba[i].begin());
    ++report.class_counts[label];
    if (predicted == label) {
      ++correct;
      ++report.class_correct[label];
    }
    ce -= std::log(std::max(proba[i][label], 1e-300));
  }
  report.accuracy = static_cast<double>(correct) / n;
  report.loss = ce / n;
  return report;
}

void write_metrics(std::ostream& out, const MetricsReport& report,
                   const std::vector<std::string>& class_labels) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "task=" << models::to_string(report.task) << '\n';
  out << "count=" << report.count << '\n';
  out << "loss=" << num(report.loss) << '\n';
  if (report.task == Task::classification) {
    out << "accuracy=" << num(report.accuracy) << '\n';
    for (std::size_t k = 0; k < report.class_counts.size(); ++k) {
      const std::string label = k < class_labels.size() ? class_labels[k] : std::to_string(k);
      out << "class." << label << ".count=" << report.class_counts[k] << '\n';
      out << "class." << label << ".correct=" << report.class_correct[k] << '\n';
    }
  } else {
    out << "mean_l1=" << num(report.mean_l1) << '\n';
    out << "pearson=" << num(report.pearson) << '\n';
  }
}

void write_pairs_csv(std::ostream& out, const MetricsReport& report) {
  char buf[96];
  out << "predicted,actual\n";
  for (const auto& [p, a] : report.pairs) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p, a);
    out << buf;
  }
}

}  // namespace chartab::pipeline

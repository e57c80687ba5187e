#include "chartab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <ostream>

#include "chartab/error.hpp"
#include "chartab/pipeline.hpp"
#include "chartab/rng.hpp"

namespace chartab::analysis {

using encoding::EncodedExample;
using engine::Tensor;
using models::ModelBundle;

namespace {

void require_structured(const EncodedExample& example, const char* what) {
  if (example.mode != encoding::EncodingMode::structured) {
    throw DataError(std::string(what) + " requires a structured encoding");
  }
}

// Scores an output row against the reference: absolute difference for a
// regression output, L1 over class probabilities for a classifier.
std::vector<double> output_view(const ModelBundle& bundle, std::span<const double> raw) {
  std::vector<double> out(raw.begin(), raw.end());
  if (bundle.task == models::Task::classification) {
    const double top = *std::max_element(out.begin(), out.end());
    double total = 0.0;
    for (double& v : out) total += (v = std::exp(v - top));
    for (double& v : out) v /= total;
  }
  return out;
}

double l1(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

// Runs `work(i)` for i in [0, n) across threads, rethrowing the first failure.
template <typename F>
void parallel_for(std::size_t n, F&& work) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      work(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(chartab_analysis_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

AttributionReport occlusion_frozen(const ModelBundle& bundle, const EncodedExample& example,
                                   std::size_t window, std::size_t stride) {
  require_structured(example, "occlusion attribution");
  const auto starts = occlusion_starts(example.rows(), window, stride);
  std::vector<EncodedExample> variants;
  variants.reserve(starts.size() + 1);
  variants.push_back(example);
  for (std::size_t s : starts) variants.push_back(encoding::occlude(example, s, window));

  engine::NoGradGuard no_grad;
  const Tensor out = models::forward(bundle, variants);
  const std::size_t w = out.cols();
  const auto reference = output_view(bundle, out.values().subspan(0, w));
  std::vector<double> per_char(example.rows(), 0.0);
  for (std::size_t v = 0; v < starts.size(); ++v) {
    const double score = l1(reference, output_view(bundle, out.values().subspan((v + 1) * w, w)));
    for (std::size_t r = starts[v]; r < starts[v] + window; ++r) {
      per_char[r] = std::max(per_char[r], score);
    }
  }
  AttributionReport report;
  report.method = Method::occlusion;
  report.scale = per_char.empty() ? 0.0 : *std::max_element(per_char.begin(), per_char.end());
  report.per_character = max_normalize(per_char);
  report.per_column = column_values(report.per_character, bundle.schema, Aggregation::max);
  report.normalized = true;
  return report;
}

// `bundle` must hold parameters that do not require gradients.
AttributionReport gradient_frozen(const ModelBundle& bundle, const EncodedExample& example) {
  require_structured(example, "gradient x input attribution");
  engine::GradModeGuard grad_on(true);
  Tensor input = models::input_tensor(bundle, example, true);
  Tensor out = models::forward_input(bundle, input);
  Tensor objective;
  if (bundle.task == models::Task::classification) {
    const Tensor probs = engine::softmax(out);
    const auto p = probs.values();
    const std::size_t top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    objective = engine::slice_cols(probs, top, 1);
  } else {
    objective = out;
  }
  objective.backward();
  const auto grad = input.grad();
  std::vector<double> per_char(example.rows(), 0.0);
  if (!grad.empty()) {
    for (std::size_t r = 0; r < example.rows(); ++r) {
      auto x = example.row(r);
      double s = 0.0;
      for (std::size_t c = 0; c < example.dim; ++c) s += std::abs(grad[r * example.dim + c]) * x[c];
      per_char[r] = s;
    }
  }
  AttributionReport report;
  report.method = Method::gradient_input;
  report.scale = per_char.empty() ? 0.0 : *std::max_element(per_char.begin(), per_char.end());
  report.per_character = max_normalize(per_char);
  report.per_column = column_values(report.per_character, bundle.schema, Aggregation::max);
  report.normalized = true;
  return report;
}

AttributionReport combined_frozen(const ModelBundle& bundle, const EncodedExample& example,
                                  std::size_t window, std::size_t stride) {
  const auto occ = occlusion_frozen(bundle, example, window, stride);
  const auto grad = gradient_frozen(bundle, example);
  AttributionReport report;
  report.method = Method::combined;
  report.per_character.resize(occ.per_character.size());
  for (std::size_t i = 0; i < report.per_character.size(); ++i) {
    report.per_character[i] = (occ.per_character[i] + grad.per_character[i]) / 2.0;
  }
  report.per_column = column_values(report.per_character, bundle.schema, Aggregation::max);
  return report;
}

AttributionReport single(const ModelBundle& frozen, const EncodedExample& example, Method method,
                         std::size_t window, std::size_t stride) {
  switch (method) {
    case Method::occlusion:
      return occlusion_frozen(frozen, example, window, stride);
    case Method::gradient_input:
      return gradient_frozen(frozen, example);
    case Method::combined:
      return combined_frozen(frozen, example, window, stride);
  }
  throw DataError("unknown attribution method");
}

}  // namespace

std::size_t AttributionReport::argmax_column() const {
  if (per_column.empty()) throw DataError("attribution report has no columns");
  return static_cast<std::size_t>(std::max_element(per_column.begin(), per_column.end()) -
                                  per_column.begin());
}

std::vector<double> max_normalize(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  const double top = out.empty() ? 0.0 : *std::max_element(out.begin(), out.end());
  if (top > 0.0) {
    for (double& v : out) v /= top;
  }
  return out;
}

std::vector<double> column_values(std::span<const double> per_character,
                                  const encoding::FieldSchema& schema, Aggregation aggregation) {
  if (per_character.size() != schema.total_width()) {
    throw ShapeError("attribution has " + std::to_string(per_character.size()) +
                     " characters, schema width is " + std::to_string(schema.total_width()));
  }
  std::vector<double> out(schema.n_fields(), 0.0);
  for (std::size_t f = 0; f < schema.n_fields(); ++f) {
    const auto chars = per_character.subspan(schema.offset(f), schema.fields()[f].width);
    if (aggregation == Aggregation::max) {
      out[f] = *std::max_element(chars.begin(), chars.end());
    } else {
      out[f] = std::accumulate(chars.begin(), chars.end(), 0.0) / static_cast<double>(chars.size());
    }
  }
  return out;
}

std::vector<std::size_t> occlusion_starts(std::size_t width, std::size_t window,
                                          std::size_t stride) {
  if (window < 1 || window > 4) throw DataError("occlusion window must be between 1 and 4");
  if (stride < 1) throw DataError("occlusion stride must be at least 1");
  if (width < window) throw DataError("occlusion window is wider than the example");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= width; s += stride) starts.push_back(s);
  // Keep the trailing characters covered when the stride overshoots them.
  if (starts.back() + window < width) starts.push_back(width - window);
  return starts;
}

AttributionReport occlusion_attribution(const ModelBundle& bundle, const EncodedExample& example,
                                        std::size_t window, std::size_t stride) {
  return occlusion_frozen(bundle, example, window, stride);
}

AttributionReport gradient_input_attribution(const ModelBundle& bundle,
                                             const EncodedExample& example) {
  return gradient_frozen(models::freeze(bundle), example);
}

AttributionReport combined_attribution(const ModelBundle& bundle, const EncodedExample& example,
                                       std::size_t window, std::size_t stride) {
  return combined_frozen(models::freeze(bundle), example, window, stride);
}

AttributionReport aggregate_attribution(const ModelBundle& bundle,
                                        std::span<const EncodedExample> examples, Method method,
                                        Aggregation aggregation, std::size_t window,
                                        std::size_t stride) {
  if (examples.empty()) throw DataError("attribution needs at least one example");
  const ModelBundle frozen = models::freeze(bundle);
  std::vector<AttributionReport> reports(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) {
    reports[i] = single(frozen, examples[i], method, window, stride);
  });

  AttributionReport out;
  out.method = method;
  out.sample_count = examples.size();
  out.normalized = method != Method::combined;
  out.per_character.assign(bundle.schema.total_width(), 0.0);
  out.per_column.assign(bundle.schema.n_fields(), 0.0);
  const double n = static_cast<double>(examples.size());
  for (const auto& r : reports) {
    const auto cols = column_values(r.per_character, bundle.schema, aggregation);
    for (std::size_t f = 0; f < cols.size(); ++f) out.per_column[f] += cols[f] / n;
    for (std::size_t c = 0; c < r.per_character.size(); ++c) out.per_character[c] += r.per_character[c] / n;
  }
  if (examples.size() > 1) out.normalized = false;
  return out;
}

double embedding_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("embedding vectors differ in length");
  return l1(a, b);
}

EmbeddingPairs pairwise_embedding(const ModelBundle& bundle,
                                  std::span<const encoding::RawExample> rows,
                                  std::size_t layer_id) {
  if (bundle.task != models::Task::regression) {
    throw DataError("embedding distances need a regression bundle");
  }
  const std::size_t layers = models::capture_layer_count(bundle);
  if (layer_id < 1 || layer_id > layers) {
    throw DataError("layer " + std::to_string(layer_id) + " is out of range; the model has " +
                    std::to_string(layers) + " capturable layers");
  }
  if (rows.size() < 2) throw DataError("embedding distances need at least two rows");

  std::vector<EncodedExample> examples;
  std::vector<double> targets;
  examples.reserve(rows.size());
  for (const auto& row : rows) {
    if (!row.target) throw DataError("embedding distances need target values");
    examples.push_back(models::encode_row(bundle, row));
    targets.push_back(*row.target);
  }

  const std::size_t k = examples.size();
  std::vector<std::vector<double>> activations(k);
  const ModelBundle frozen = models::freeze(bundle);
  parallel_for(k, [&](std::size_t i) {
    engine::NoGradGuard no_grad;
    std::vector<Tensor> capture;
    models::forward(frozen, std::span(&examples[i], 1), &capture);
    const auto v = capture[layer_id - 1].values();
    activations[i].assign(v.begin(), v.end());
  });

  EmbeddingPairs out;
  out.layer_id = layer_id;
  out.pairs.reserve(k * (k - 1) / 2);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      out.pairs.emplace_back(embedding_distance(activations[i], activations[j]),
                             std::abs(targets[i] - targets[j]));
    }
  }
  std::vector<double> m(out.pairs.size()), ref(out.pairs.size());
  for (std::size_t p = 0; p < out.pairs.size(); ++p) std::tie(m[p], ref[p]) = out.pairs[p];
  out.correlation = pipeline::pearson(m, ref);
  return out;
}

double permutation_delta(const ModelBundle& bundle, const EncodedExample& example,
                         std::span<const std::size_t> permutation) {
  const EncodedExample permuted = models::permute_input(example, permutation);
  engine::NoGradGuard no_grad;
  const Tensor a = models::forward_input(bundle, models::input_tensor(bundle, example));
  const Tensor b = models::forward_input(bundle, models::input_tensor(bundle, permuted));
  return l1(a.values(), b.values());
}

PermutationReport permutation_test(const ModelBundle& bundle,
                                   std::span<const EncodedExample> examples,
                                   std::size_t n_permutations, std::uint64_t seed) {
  if (!bundle.is_transformer()) throw DataError("the permutation test needs a transformer bundle");
  if (n_permutations < 1) throw DataError("the permutation test needs at least one permutation");
  if (examples.empty()) throw DataError("the permutation test needs at least one example");
  for (const auto& ex : examples) require_structured(ex, "the permutation test");

  // Permutations are drawn up front so results do not depend on thread count.
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> perms(examples.size() * n_permutations);
  for (std::size_t i = 0; i < perms.size(); ++i) {
    auto& p = perms[i];
    p.resize(examples[i / n_permutations].rows());
    std::iota(p.begin(), p.end(), std::size_t{0});
    rng.shuffle(std::span(p));
  }

  const ModelBundle frozen = models::freeze(bundle);
  PermutationReport report;
  report.deltas.assign(perms.size(), 0.0);
  parallel_for(perms.size(), [&](std::size_t i) {
    report.deltas[i] = permutation_delta(frozen, examples[i / n_permutations], perms[i]);
  });
  report.min = *std::min_element(report.deltas.begin(), report.deltas.end());
  report.max = *std::max_element(report.deltas.begin(), report.deltas.end());
  report.mean = std::accumulate(report.deltas.begin(), report.deltas.end(), 0.0) /
                static_cast<double>(report.deltas.size());
  return report;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k >= n) return idx;
  Rng rng(seed);
  rng.shuffle(std::span(idx));
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_column_csv(std::ostream& out, const AttributionReport& report,
                      const encoding::FieldSchema& schema) {
  if (report.per_column.size() != schema.n_fields()) {
    throw ShapeError("attribution columns do not match the schema");
  }
  out << "column_name,value\n";
  for (std::size_t f = 0; f < schema.n_fields(); ++f) {
    out << pipeline::csv_escape(schema.fields()[f].name) << ',' << format_value(report.per_column[f])
        << '\n';
  }
}

void write_character_csv(std::ostream& out, const AttributionReport& report,
                         const encoding::Vocabulary& vocab, const EncodedExample* example) {
  out << "position,character,value\n";
  for (std::size_t p = 0; p < report.per_character.size(); ++p) {
    std::string ch;
    if (example && p < example->rows()) {
      const auto row = example->row(p);
      const auto hot = std::max_element(row.begin(), row.end());
      if (*hot > 0.0) {
        const auto index = static_cast<std::size_t>(hot - row.begin());
        if (index < vocab.size()) {
          ch = encoding::encode_utf8(std::u32string(1, vocab.character(index)));
        }
      }
    }
    out << p << ',' << pipeline::csv_escape(ch) << ',' << format_value(report.per_character[p])
        << '\n';
  }
}

void write_pairs_csv(std::ostream& out, const EmbeddingPairs& pairs) {
  out << "embedding_distance,reference_distance\n";
  for (const auto& [m, ref] : pairs.pairs) out << format_value(m) << ',' << format_value(ref) << '\n';
}

}  // namespace chartab::analysis

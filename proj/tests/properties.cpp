#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chartab/analysis.hpp"
#include "chartab/pipeline.hpp"

namespace props {

using namespace chartab;
using encoding::EncodedExample;
using encoding::RawExample;

namespace {

// Pool drawn from when building random vocabularies.
const std::u32string kPool =
    U"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ .,-/:;'\"()?!"
    U"éüßñαβπ中文\U0001F600";

void note(Outcome& o, bool ok, const std::string& what) {
  ++o.cases;
  if (ok) return;
  if (o.failures++ == 0) o.first_failure = what;
}

std::string describe(const RawExample& row) {
  std::string s = "[";
  for (const auto& v : row.values) s += (v ? "\"" + *v + "\"" : std::string("<missing>")) + ",";
  return s + "]";
}

}  // namespace

Domain random_domain(Rng& rng, std::size_t max_fields, std::size_t max_width) {
  std::u32string pool = kPool;
  rng.shuffle(std::span(pool));
  const std::size_t n_chars = 2 + rng.below(pool.size() - 1);
  std::vector<char32_t> chars(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_chars));
  std::vector<encoding::Field> fields;
  const std::size_t n_fields = 1 + rng.below(max_fields);
  for (std::size_t f = 0; f < n_fields; ++f) {
    fields.push_back({"f" + std::to_string(f), 1 + rng.below(max_width)});
  }
  return {encoding::FieldSchema(std::move(fields)), encoding::Vocabulary(std::move(chars))};
}

RawExample random_row(Rng& rng, const Domain& domain, bool allow_overlong) {
  RawExample row;
  for (const auto& field : domain.schema.fields()) {
    if (rng.below(5) == 0) {
      row.values.emplace_back();
      continue;
    }
    const std::size_t limit = allow_overlong ? 2 * field.width + 2 : field.width;
    const std::size_t len = 1 + rng.below(limit);
    std::u32string text;
    for (std::size_t i = 0; i < len; ++i) {
      text.push_back(domain.vocab.character(rng.below(domain.vocab.size())));
    }
    row.values.emplace_back(encoding::encode_utf8(text));
  }
  return row;
}

Outcome roundtrip(std::size_t n_rows, std::uint64_t seed) {
  Rng rng(seed);
  Outcome o;
  Domain domain = random_domain(rng);
  for (std::size_t i = 0; i < n_rows; ++i) {
    if (i % 100 == 0) domain = random_domain(rng);
    const RawExample row = random_row(rng, domain);
    for (auto mode : {encoding::MissingMode::placeholder, encoding::MissingMode::zero}) {
      const auto ex = encoding::encode_structured(row, domain.schema, domain.vocab, mode);
      const auto back = encoding::decode(ex, domain.schema, domain.vocab);
      note(o, back == row, "round trip failed for " + describe(row));
    }
  }
  return o;
}

Outcome onehot_rows(std::size_t n_rows, std::uint64_t seed) {
  Rng rng(seed);
  Outcome o;
  Domain domain = random_domain(rng);
  for (std::size_t i = 0; i < n_rows; ++i) {
    if (i % 100 == 0) domain = random_domain(rng);
    const RawExample row = random_row(rng, domain, true);
    const auto ex = encoding::encode_structured(row, domain.schema, domain.vocab);
    bool ok = ex.rows() == domain.schema.total_width() && ex.dim == domain.vocab.dimension();
    for (std::size_t r = 0; ok && r < ex.rows(); ++r) {
      const auto v = ex.row(r);
      const auto ones = std::count(v.begin(), v.end(), 1.0);
      const auto zeros = std::count(v.begin(), v.end(), 0.0);
      ok = ones == 1 && static_cast<std::size_t>(zeros) == ex.dim - 1;
    }
    note(o, ok, "row is not one-hot for " + describe(row));
  }
  return o;
}

Outcome occlusion_shape(std::size_t n_rows, std::uint64_t seed) {
  Rng rng(seed);
  Outcome o;
  Domain domain = random_domain(rng);
  for (std::size_t i = 0; i < n_rows; ++i) {
    if (i % 100 == 0) domain = random_domain(rng);
    const auto mode = rng.below(2) ? encoding::MissingMode::zero : encoding::MissingMode::placeholder;
    const auto ex = encoding::encode_structured(random_row(rng, domain, true), domain.schema,
                                                domain.vocab, mode);
    const std::size_t window = 1 + rng.below(std::min<std::size_t>(4, ex.rows()));
    const std::size_t start = rng.below(ex.rows() - window + 1);
    const auto occ = encoding::occlude(ex, start, window);
    bool ok = occ.rows() == ex.rows() && occ.dim == ex.dim;
    std::size_t changed = 0;
    for (std::size_t r = 0; ok && r < ex.rows(); ++r) {
      const auto a = ex.row(r), b = occ.row(r);
      const bool inside = r >= start && r < start + window;
      if (!std::equal(a.begin(), a.end(), b.begin())) ++changed;
      if (inside) {
        for (std::size_t c = 0; c < ex.dim; ++c) ok = ok && b[c] == (c == ex.dim - 1 ? 1.0 : 0.0);
      } else {
        ok = ok && std::equal(a.begin(), a.end(), b.begin());
      }
    }
    note(o, ok && changed == window, "occlusion changed the wrong rows");
  }
  return o;
}

Outcome metric_axioms(std::size_t n_triples, std::uint64_t seed) {
  Rng rng(seed);
  const Domain domain = random_domain(rng, 4, 4);
  models::ModelBundle bundle;
  bundle.schema = domain.schema;
  bundle.vocab = domain.vocab;
  bundle.sequence_length = domain.schema.total_width();
  models::MlpSpec spec;
  spec.input_width = bundle.sequence_length * bundle.vocab.dimension();
  spec.hidden_widths = {16, 8, 4};
  bundle.spec = spec;
  bundle.parameters = models::init_parameters(spec, seed);

  Outcome o;
  const std::size_t layers = models::capture_layer_count(bundle);
  for (std::size_t t = 0; t < n_triples; ++t) {
    std::vector<EncodedExample> ex;
    for (int i = 0; i < 3; ++i) {
      ex.push_back(encoding::encode_structured(random_row(rng, domain), domain.schema, domain.vocab));
    }
    std::vector<engine::Tensor> capture;
    engine::NoGradGuard no_grad;
    models::forward(bundle, ex, &capture);
    const auto& act = capture[rng.below(layers)];
    const std::size_t w = act.cols();
    auto v = [&](int i) { return act.values().subspan(static_cast<std::size_t>(i) * w, w); };
    const double ab = analysis::embedding_distance(v(0), v(1));
    const double ba = analysis::embedding_distance(v(1), v(0));
    const double bc = analysis::embedding_distance(v(1), v(2));
    const double ac = analysis::embedding_distance(v(0), v(2));
    const double aa = analysis::embedding_distance(v(0), v(0));
    const bool ok = ab == ba && aa == 0.0 && ab >= 0.0 && ac <= ab + bc + 1e-12 * (ab + bc);
    note(o, ok, "metric axiom violated on triple " + std::to_string(t));
  }
  return o;
}

std::string bundle_bytes(const models::ModelBundle& bundle) {
  std::ostringstream out;
  models::write_bundle(out, bundle);
  return out.str();
}

Outcome training_determinism(std::uint64_t seed) {
  const auto rows = pipeline::generate_controls(200, seed, 0.1);
  std::ostringstream csv;
  pipeline::write_controls_csv(csv, rows);
  std::istringstream in(csv.str());
  pipeline::SchemaHints hints;
  hints.drop_columns = {"y2", "y3"};
  const auto data = pipeline::dataset_from_table(pipeline::parse_csv(in), "y1",
                                                 models::Task::regression, hints);
  pipeline::ModelContext context;
  context.target_name = "y1";
  context.schema = pipeline::infer_schema(data, data.rows, hints);
  context.vocab = encoding::build_vocabulary(data.rows);

  Outcome o;
  for (auto arch : {pipeline::Architecture::mlp, pipeline::Architecture::transformer}) {
    pipeline::ModelOptions options;
    options.architecture = arch;
    options.hidden_widths = {32, 16, 8};
    options.n_layers = 1;
    options.decoder_hidden = 16;
    pipeline::TrainConfig config;
    config.epochs = 2;
    config.seed = seed;
    const auto a = pipeline::train(data.rows, context, options, config);
    const auto b = pipeline::train(data.rows, context, options, config);
    note(o, bundle_bytes(a) == bundle_bytes(b), "bundles differ for equal seeds");
    config.seed = seed + 1;
    const auto c = pipeline::train(data.rows, context, options, config);
    note(o, bundle_bytes(a) != bundle_bytes(c), "bundles identical for different seeds");
  }
  return o;
}

}  // namespace props

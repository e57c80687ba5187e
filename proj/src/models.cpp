#include <cmath>

#include "chartab/error.hpp"
#include "chartab/models.hpp"
#include "chartab/rng.hpp"

namespace chartab::models {

using engine::Shape;

TransformerSpec finalize(TransformerSpec spec) {
  if (spec.n_heads == 0) throw ShapeError("transformer needs at least one head");
  if (spec.model_dim == 0) {
    spec.model_dim = (spec.onehot_dim + spec.n_heads - 1) / spec.n_heads * spec.n_heads;
  }
  if (spec.model_dim % spec.n_heads != 0) {
    throw ShapeError("model_dim " + std::to_string(spec.model_dim) + " is not divisible by " +
                     std::to_string(spec.n_heads) + " heads");
  }
  if (spec.model_dim < spec.onehot_dim) {
    throw ShapeError("model_dim is smaller than the one-hot dimension");
  }
  if (spec.feedforward_dim == 0) spec.feedforward_dim = 4 * spec.model_dim;
  return spec;
}

void ParameterSet::add(std::string name, Tensor tensor) {
  if (!index_.emplace(name, entries_.size()).second) {
    throw ShapeError("duplicate parameter '" + name + "'");
  }
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("missing parameter '" + name + "'");
  return entries_[it->second].second;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

namespace {

struct ParamShape {
  std::string name;
  Shape shape;
  enum Kind { weight, bias, gain, offset } kind;
  std::size_t fan_in;
};

std::string layer_key(std::size_t layer, const char* part) {
  return "enc." + std::to_string(layer) + "." + part;
}

std::vector<ParamShape> layout(const MlpSpec& spec) {
  std::vector<ParamShape> out;
  std::size_t in = spec.input_width;
  std::vector<std::size_t> widths = spec.hidden_widths;
  widths.push_back(spec.output_width);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::string prefix = "mlp." + std::to_string(l);
    out.push_back({prefix + ".weight", {in, widths[l]}, ParamShape::weight, in});
    out.push_back({prefix + ".bias", {1, widths[l]}, ParamShape::bias, in});
    in = widths[l];
  }
  return out;
}

std::vector<ParamShape> layout(const TransformerSpec& spec) {
  std::vector<ParamShape> out;
  const std::size_t d = spec.model_dim, ff = spec.feedforward_dim;
  if (spec.encoder_enabled) {
    for (std::size_t l = 0; l < spec.n_layers; ++l) {
      for (const char* proj : {"wq", "wk", "wv", "wo"}) {
        out.push_back({layer_key(l, proj), {d, d}, ParamShape::weight, d});
        std::string bias = proj;
        bias[0] = 'b';
        out.push_back({layer_key(l, bias.c_str()), {1, d}, ParamShape::bias, d});
      }
      out.push_back({layer_key(l, "ln1.gamma"), {1, d}, ParamShape::gain, d});
      out.push_back({layer_key(l, "ln1.beta"), {1, d}, ParamShape::offset, d});
      out.push_back({layer_key(l, "ff1.weight"), {d, ff}, ParamShape::weight, d});
      out.push_back({layer_key(l, "ff1.bias"), {1, ff}, ParamShape::bias, d});
      out.push_back({layer_key(l, "ff2.weight"), {ff, d}, ParamShape::weight, ff});
      out.push_back({layer_key(l, "ff2.bias"), {1, d}, ParamShape::bias, ff});
      out.push_back({layer_key(l, "ln2.gamma"), {1, d}, ParamShape::gain, d});
      out.push_back({layer_key(l, "ln2.beta"), {1, d}, ParamShape::offset, d});
    }
  }
  const std::size_t flat = spec.seq_len * d;
  out.push_back({"dec.hidden.weight", {flat, spec.decoder_hidden}, ParamShape::weight, flat});
  out.push_back({"dec.hidden.bias", {1, spec.decoder_hidden}, ParamShape::bias, flat});
  out.push_back({"dec.out.weight",
                 {spec.decoder_hidden, spec.output_width},
                 ParamShape::weight,
                 spec.decoder_hidden});
  out.push_back({"dec.out.bias", {1, spec.output_width}, ParamShape::bias, spec.decoder_hidden});
  return out;
}

std::vector<ParamShape> layout(const ModelSpec& spec) {
  return std::visit([](const auto& s) { return layout(s); }, spec);
}

}  // namespace

ParameterSet init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ParameterSet params;
  for (const auto& p : layout(spec)) {
    std::vector<double> values(p.shape.numel());
    if (p.kind == ParamShape::gain) {
      std::fill(values.begin(), values.end(), 1.0);
    } else if (p.kind != ParamShape::offset) {
      const double bound = std::sqrt(1.0 / static_cast<double>(p.fan_in));
      for (double& v : values) v = rng.uniform(-bound, bound);
    }
    params.add(p.name, Tensor::from(p.shape, std::move(values), true));
  }
  return params;
}

void check_parameters(const ModelSpec& spec, const ParameterSet& params) {
  const auto expected = layout(spec);
  if (expected.size() != params.size()) {
    throw ShapeError("model expects " + std::to_string(expected.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (const auto& p : expected) {
    const Tensor& t = params.at(p.name);
    if (t.shape() != p.shape) {
      throw ShapeError("parameter '" + p.name + "' has shape " + t.shape().str() + ", expected " +
                       p.shape.str());
    }
  }
}

Tensor mlp_forward(const MlpSpec& spec, const ParameterSet& params, const Tensor& input,
                   std::vector<Tensor>* capture) {
  if (input.cols() != spec.input_width) {
    throw ShapeError("mlp input has " + std::to_string(input.cols()) + " columns, model expects " +
                     std::to_string(spec.input_width));
  }
  Tensor x = input;
  const std::size_t n_layers = spec.hidden_widths.size() + 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string prefix = "mlp." + std::to_string(l);
    x = engine::add_row(engine::matmul(x, params.at(prefix + ".weight")),
                        params.at(prefix + ".bias"));
    if (l + 1 < n_layers) {
      x = engine::relu(x);
      if (capture) capture->push_back(x);
    }
  }
  return x;
}

std::vector<double> positional_table(std::size_t seq_len, std::size_t dim) {
  std::vector<double> table(seq_len * dim);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(i - i % 2) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      table[pos * dim + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

Tensor multi_head_attention(const TransformerSpec& spec, const ParameterSet& params,
                            std::size_t layer, const Tensor& x) {
  auto proj = [&](const char* w, const char* b) {
    return engine::add_row(engine::matmul(x, params.at(layer_key(layer, w))),
                           params.at(layer_key(layer, b)));
  };
  const Tensor q = proj("wq", "bq");
  const Tensor k = proj("wk", "bk");
  const Tensor v = proj("wv", "bv");
  const std::size_t head_dim = spec.model_dim / spec.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> heads;
  heads.reserve(spec.n_heads);
  for (std::size_t h = 0; h < spec.n_heads; ++h) {
    const std::size_t start = h * head_dim;
    const Tensor qh = engine::slice_cols(q, start, head_dim);
    const Tensor kh = engine::slice_cols(k, start, head_dim);
    const Tensor vh = engine::slice_cols(v, start, head_dim);
    const Tensor scores = engine::scale(engine::matmul(qh, engine::transpose(kh)), inv_sqrt);
    heads.push_back(engine::matmul(engine::softmax(scores), vh));
  }
  const Tensor mixed = spec.n_heads == 1 ? heads[0] : engine::concat_cols(heads);
  return engine::add_row(engine::matmul(mixed, params.at(layer_key(layer, "wo"))),
                         params.at(layer_key(layer, "bo")));
}

namespace {

Tensor prepare_sequence(const TransformerSpec& spec, const Tensor& sequence) {
  if (sequence.rows() != spec.seq_len || sequence.cols() != spec.onehot_dim) {
    throw ShapeError("transformer input " + sequence.shape().str() + " does not match [" +
                     std::to_string(spec.seq_len) + "x" + std::to_string(spec.onehot_dim) + "]");
  }
  Tensor x = engine::pad_cols(sequence, spec.model_dim);
  if (spec.positional_encoding) {
    x = engine::add(x, Tensor::from({spec.seq_len, spec.model_dim},
                                    positional_table(spec.seq_len, spec.model_dim)));
  }
  return x;
}

}  // namespace

Tensor transformer_encode(const TransformerSpec& spec, const ParameterSet& params,
                          const Tensor& sequence, std::vector<Tensor>* capture) {
  Tensor x = prepare_sequence(spec, sequence);
  if (!spec.encoder_enabled) return x;
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    const Tensor attended = multi_head_attention(spec, params, l, x);
    x = engine::layer_norm(engine::add(x, attended), params.at(layer_key(l, "ln1.gamma")),
                           params.at(layer_key(l, "ln1.beta")));
    Tensor ff = engine::relu(engine::add_row(engine::matmul(x, params.at(layer_key(l, "ff1.weight"))),
                                             params.at(layer_key(l, "ff1.bias"))));
    ff = engine::add_row(engine::matmul(ff, params.at(layer_key(l, "ff2.weight"))),
                         params.at(layer_key(l, "ff2.bias")));
    x = engine::layer_norm(engine::add(x, ff), params.at(layer_key(l, "ln2.gamma")),
                           params.at(layer_key(l, "ln2.beta")));
    if (capture) capture->push_back(x);
  }
  return x;
}

Tensor transformer_forward(const TransformerSpec& spec, const ParameterSet& params,
                           const Tensor& sequence, std::vector<Tensor>* capture) {
  const Tensor encoded = transformer_encode(spec, params, sequence, capture);
  Tensor hidden = engine::relu(engine::add_row(
      engine::matmul(engine::flatten(encoded), params.at("dec.hidden.weight")),
      params.at("dec.hidden.bias")));
  if (capture) capture->push_back(hidden);
  return engine::add_row(engine::matmul(hidden, params.at("dec.out.weight")),
                         params.at("dec.out.bias"));
}

std::size_t ModelBundle::output_width() const {
  return std::visit([](const auto& s) { return s.output_width; }, spec);
}

ModelBundle freeze(const ModelBundle& bundle) {
  ModelBundle out = bundle;
  out.parameters = ParameterSet();
  for (const auto& [name, t] : bundle.parameters.entries()) out.parameters.add(name, t.detach());
  return out;
}

encoding::EncodedExample encode_row(const ModelBundle& bundle, const encoding::RawExample& row) {
  if (bundle.encoding == encoding::EncodingMode::structured) {
    return encoding::encode_structured(row, bundle.schema, bundle.vocab, bundle.missing);
  }
  if (row.values.size() != bundle.schema.n_fields()) {
    throw DataError("row has " + std::to_string(row.values.size()) + " values, schema has " +
                    std::to_string(bundle.schema.n_fields()) + " fields");
  }
  if (encoding::unstructured_length(row) <= bundle.sequence_length) {
    return encoding::encode_unstructured(row, bundle.vocab, bundle.sequence_length);
  }
  encoding::RawExample clipped = row;
  std::size_t budget = bundle.sequence_length;
  for (auto& value : clipped.values) {
    if (!value) continue;
    auto chars = encoding::decode_utf8(*value);
    if (chars.size() > budget) chars.resize(budget);
    budget -= chars.size();
    if (chars.empty()) {
      value.reset();
    } else {
      value = encoding::encode_utf8(chars);
    }
  }
  return encoding::encode_unstructured(clipped, bundle.vocab, bundle.sequence_length);
}

Tensor input_tensor(const ModelBundle& bundle, const encoding::EncodedExample& example,
                    bool requires_grad) {
  if (example.dim != bundle.vocab.dimension() || example.rows() != bundle.sequence_length) {
    throw ShapeError("example of " + std::to_string(example.rows()) + " rows x " +
                     std::to_string(example.dim) + " does not match the model input (" +
                     std::to_string(bundle.sequence_length) + " x " +
                     std::to_string(bundle.vocab.dimension()) + ")");
  }
  const Shape shape = bundle.is_transformer() ? Shape{example.rows(), example.dim}
                                              : Shape{1, example.matrix.size()};
  return Tensor::from(shape, example.matrix, requires_grad);
}

Tensor forward_input(const ModelBundle& bundle, const Tensor& input,
                     std::vector<Tensor>* capture) {
  if (const auto* mlp = std::get_if<MlpSpec>(&bundle.spec)) {
    return mlp_forward(*mlp, bundle.parameters, input, capture);
  }
  return transformer_forward(std::get<TransformerSpec>(bundle.spec), bundle.parameters, input,
                             capture);
}

Tensor forward(const ModelBundle& bundle, std::span<const encoding::EncodedExample> examples,
               std::vector<Tensor>* capture) {
  if (examples.empty()) throw ShapeError("forward on an empty batch");
  if (const auto* mlp = std::get_if<MlpSpec>(&bundle.spec)) {
    std::vector<double> batch;
    batch.reserve(examples.size() * mlp->input_width);
    for (const auto& ex : examples) {
      const Tensor row = input_tensor(bundle, ex);
      batch.insert(batch.end(), row.values().begin(), row.values().end());
    }
    const Tensor input = Tensor::from({examples.size(), mlp->input_width}, std::move(batch));
    return mlp_forward(*mlp, bundle.parameters, input, capture);
  }
  const auto& spec = std::get<TransformerSpec>(bundle.spec);
  std::vector<Tensor> outputs;
  std::vector<std::vector<Tensor>> per_layer;
  outputs.reserve(examples.size());
  for (const auto& ex : examples) {
    std::vector<Tensor> layers;
    outputs.push_back(transformer_forward(spec, bundle.parameters, input_tensor(bundle, ex),
                                          capture ? &layers : nullptr));
    if (capture) {
      per_layer.resize(layers.size());
      for (std::size_t l = 0; l < layers.size(); ++l) {
        per_layer[l].push_back(engine::flatten(layers[l]));
      }
    }
  }
  if (capture) {
    for (const auto& rows : per_layer) capture->push_back(engine::concat_rows(rows));
  }
  return outputs.size() == 1 ? outputs[0] : engine::concat_rows(outputs);
}

Tensor mlp_forward(const ModelBundle& bundle, const encoding::EncodedExample& example,
                   std::vector<Tensor>* capture) {
  if (bundle.is_transformer()) throw ShapeError("bundle does not hold an MLP");
  return forward_input(bundle, input_tensor(bundle, example), capture);
}

Tensor transformer_forward(const ModelBundle& bundle, const encoding::EncodedExample& example,
                           std::vector<Tensor>* capture) {
  if (!bundle.is_transformer()) throw ShapeError("bundle does not hold a transformer");
  return forward_input(bundle, input_tensor(bundle, example), capture);
}

std::size_t capture_layer_count(const ModelBundle& bundle) {
  if (const auto* mlp = std::get_if<MlpSpec>(&bundle.spec)) return mlp->hidden_widths.size();
  const auto& spec = std::get<TransformerSpec>(bundle.spec);
  return (spec.encoder_enabled ? spec.n_layers : 0) + 1;
}

encoding::EncodedExample permute_input(const encoding::EncodedExample& example,
                                       std::span<const std::size_t> permutation) {
  const std::size_t n = example.rows();
  if (permutation.size() != n) throw DataError("permutation length does not match example rows");
  std::vector<bool> seen(n, false);
  for (std::size_t p : permutation) {
    if (p >= n || seen[p]) throw DataError("permutation is not a bijection on row indices");
    seen[p] = true;
  }
  encoding::EncodedExample out = example;
  for (std::size_t i = 0; i < n; ++i) {
    auto src = example.row(permutation[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
    if (!example.char_to_field.empty()) out.char_to_field[i] = example.char_to_field[permutation[i]];
  }
  return out;
}

std::string to_string(Task task) {
  return task == Task::regression ? "regression" : "classification";
}

Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw DataError("unknown task '" + s + "'");
}

}  // namespace chartab::models

#include <cmath>
#include <numeric>
#include <sstream>

#include "chartab/error.hpp"
#include "chartab/pipeline.hpp"
#include "chartab/rng.hpp"

namespace chartab::pipeline {

using models::ModelBundle;
using models::Task;

namespace {

// Separate stream for batch order so it does not shift with the parameter count.
constexpr std::uint64_t kOrderStream = 0x9E3779B97F4A7C15ull;

}  // namespace

ModelBundle make_bundle(const ModelContext& context, const ModelOptions& options,
                        const TrainConfig& config) {
  ModelBundle b;
  b.schema = context.schema;
  b.vocab = context.vocab;
  b.task = context.task;
  b.target_name = context.target_name;
  b.class_labels = context.class_labels;
  b.encoding = config.encoding;
  b.missing = config.missing;
  b.sequence_length = context.schema.total_width();
  if (b.sequence_length == 0) throw DataError("schema has no fields");
  if (context.task == Task::classification && context.class_labels.size() < 2) {
    throw DataError("classification needs at least two classes");
  }
  const std::size_t outputs =
      context.task == Task::classification ? context.class_labels.size() : 1;

  if (options.architecture == Architecture::mlp) {
    models::MlpSpec spec;
    spec.input_width = b.sequence_length * b.vocab.dimension();
    spec.hidden_widths = options.hidden_widths;
    spec.output_width = outputs;
    for (std::size_t w : spec.hidden_widths) {
      if (w == 0) throw ShapeError("hidden layer widths must be positive");
    }
    b.spec = spec;
  } else {
    models::TransformerSpec spec;
    spec.seq_len = b.sequence_length;
    spec.onehot_dim = b.vocab.dimension();
    spec.n_layers = options.n_layers;
    spec.n_heads = options.n_heads;
    spec.feedforward_dim = options.feedforward_dim;
    spec.decoder_hidden = options.decoder_hidden;
    spec.output_width = outputs;
    spec.positional_encoding = options.positional_encoding;
    spec.encoder_enabled = options.encoder_enabled;
    b.spec = models::finalize(spec);
  }
  b.parameters = models::init_parameters(b.spec, config.seed);
  b.training.seed = config.seed;
  b.training.batch_size = config.batch_size;
  b.training.learning_rate = config.learning_rate;
  b.training.clip_norm = config.clip_norm;
  return b;
}

void train_bundle(ModelBundle& bundle, std::span<const RawExample> rows, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (rows.empty()) throw DataError("training set is empty");
  if (config.epochs < 1) throw DataError("epochs must be at least 1");
  if (config.batch_size < 1) throw DataError("batch size must be at least 1");

  std::vector<encoding::EncodedExample> encoded;
  encoded.reserve(rows.size());
  std::vector<double> targets;
  for (const auto& row : rows) {
    if (!row.target) throw DataError("training row without a target");
    encoded.push_back(models::encode_row(bundle, row));
    targets.push_back(*row.target);
  }

  const bool regression = bundle.task == Task::regression;
  if (regression && bundle.training.epoch_losses.empty()) {
    const double n = static_cast<double>(targets.size());
    const double mu = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
    double var = 0.0;
    for (double t : targets) var += (t - mu) * (t - mu);
    const double sd = std::sqrt(var / n);
    bundle.target_shift = mu;
    bundle.target_scale = sd > 0.0 ? sd : 1.0;
  }

  auto params = bundle.parameters.tensors();
  auto adam = engine::adam_init(params, {config.learning_rate});
  Rng order_rng(config.seed ^ kOrderStream);
  std::vector<std::size_t> order(rows.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(std::span<std::size_t>(order));
    double weighted = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size();
         start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<encoding::EncodedExample> batch_examples;
      std::vector<double> batch_targets;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch_examples.push_back(encoded[order[i]]);
        const double t = targets[order[i]];
        batch_targets.push_back((t - bundle.target_shift) / bundle.target_scale);
        labels.push_back(static_cast<std::size_t>(t));
      }
      const engine::Tensor output = models::forward(bundle, batch_examples);
      const engine::Tensor loss =
          regression ? engine::l1_loss(output, engine::Tensor::from({end - start, 1},
                                                                    std::move(batch_targets)))
                     : engine::cross_entropy(output, labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss " << value << " at epoch " << epoch + 1 << ", batch " << batch + 1;
        throw NumericalError(msg.str());
      }
      weighted += value * static_cast<double>(end - start);
      for (auto& p : params) p.zero_grad();
      loss.backward();
      engine::clip_grad_norm(params, config.clip_norm);
      engine::adam_step(params, adam);
    }
    double epoch_loss = weighted / static_cast<double>(rows.size());
    if (regression) epoch_loss *= bundle.target_scale;
    bundle.training.epoch_losses.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  bundle.training.epochs += config.epochs;
  bundle.training.train_rows = rows.size();
  bundle.training.final_loss = evaluate(bundle, rows).loss;
  if (!std::isfinite(bundle.training.final_loss)) {
    throw NumericalError("non-finite loss after training");
  }
}

ModelBundle train(std::span<const RawExample> rows, const ModelContext& context,
                  const ModelOptions& options, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  ModelBundle bundle = make_bundle(context, options, config);
  train_bundle(bundle, rows, config, on_epoch);
  return bundle;
}

}  // namespace chartab::pipeline

#pragma once

// The two architectures: a fully connected network over the flattened
// character matrix, and a transformer encoder over the one-hot rows followed
// by a single-hidden-layer fully connected decoder.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "chartab/encoding.hpp"
#include "chartab/engine.hpp"

namespace chartab::models {

using engine::Tensor;

struct MlpSpec {
  std::size_t input_width = 0;
  std::vector<std::size_t> hidden_widths = {512, 128, 32};
  std::size_t output_width = 1;

  bool operator==(const MlpSpec&) const = default;
};

struct TransformerSpec {
  std::size_t seq_len = 0;
  std::size_t onehot_dim = 0;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  // onehot_dim rounded up to a multiple of n_heads; extra columns are zero.
  std::size_t model_dim = 0;
  std::size_t feedforward_dim = 0;
  std::size_t decoder_hidden = 256;
  std::size_t output_width = 1;
  bool positional_encoding = false;
  bool encoder_enabled = true;

  bool operator==(const TransformerSpec&) const = default;
};

// Fills model_dim and (when zero) feedforward_dim = 4 * model_dim.
// Throws ShapeError when model_dim is not divisible by n_heads.
TransformerSpec finalize(TransformerSpec spec);

using ModelSpec = std::variant<MlpSpec, TransformerSpec>;

class ParameterSet {
 public:
  void add(std::string name, Tensor tensor);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  const engine::NamedTensors& entries() const { return entries_; }
  // Handles sharing storage with the set, in insertion order.
  std::vector<Tensor> tensors() const;

 private:
  engine::NamedTensors entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform in +-sqrt(1/fan_in) for weights and biases; layer-norm gains 1 and offsets 0.
ParameterSet init_parameters(const ModelSpec& spec, std::uint64_t seed);
// Throws ShapeError if any expected parameter is missing or misshapen.
void check_parameters(const ModelSpec& spec, const ParameterSet& params);

// input: [batch x input_width]. When capture is set it receives the
// post-activation output of every hidden layer.
Tensor mlp_forward(const MlpSpec& spec, const ParameterSet& params, const Tensor& input,
                   std::vector<Tensor>* capture = nullptr);

// Attention sublayer of encoder layer `layer` applied to x [seq x model_dim],
// without the residual connection.
Tensor multi_head_attention(const TransformerSpec& spec, const ParameterSet& params,
                            std::size_t layer, const Tensor& x);

// Encoder stack on one sequence [seq x onehot_dim]; returns [seq x model_dim].
// Captures each encoder layer's output when capture is set.
Tensor transformer_encode(const TransformerSpec& spec, const ParameterSet& params,
                          const Tensor& sequence, std::vector<Tensor>* capture = nullptr);

// One sequence [seq x onehot_dim] -> [1 x output_width]. Captures encoder
// layer outputs followed by the decoder hidden layer.
Tensor transformer_forward(const TransformerSpec& spec, const ParameterSet& params,
                           const Tensor& sequence, std::vector<Tensor>* capture = nullptr);

// Sinusoidal position table [seq x dim].
std::vector<double> positional_table(std::size_t seq_len, std::size_t dim);

enum class Task { regression, classification };

struct TrainingMeta {
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  double clip_norm = 0.0;
  std::size_t train_rows = 0;
  // Train/test split used to select the training rows.
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;
  // Mean minibatch loss per epoch, in target units.
  std::vector<double> epoch_losses;
  // Loss over the whole training set after the last epoch, in target units.
  double final_loss = 0.0;
};

struct ModelBundle {
  ModelSpec spec;
  ParameterSet parameters;
  encoding::FieldSchema schema;
  encoding::Vocabulary vocab;
  Task task = Task::regression;
  encoding::EncodingMode encoding = encoding::EncodingMode::structured;
  encoding::MissingMode missing = encoding::MissingMode::placeholder;
  // Character rows fed to the model; equals schema.total_width().
  std::size_t sequence_length = 0;
  std::string target_name;
  std::vector<std::string> class_labels;
  // Regression outputs are trained on (y - shift) / scale.
  double target_shift = 0.0;
  double target_scale = 1.0;
  TrainingMeta training;

  bool is_transformer() const { return std::holds_alternative<TransformerSpec>(spec); }
  std::size_t output_width() const;
};

// Deep copy whose parameters do not track gradients. Safe to share across
// threads for inference and input-gradient computation.
ModelBundle freeze(const ModelBundle& bundle);

// Encodes a table row the way the bundle's model expects. Unstructured rows
// longer than sequence_length keep their first sequence_length characters.
encoding::EncodedExample encode_row(const ModelBundle& bundle, const encoding::RawExample& row);

// Model input for one example: [1 x rows*dim] for the MLP, [rows x dim] for the transformer.
Tensor input_tensor(const ModelBundle& bundle, const encoding::EncodedExample& example,
                    bool requires_grad = false);

// Forward on a prepared input tensor of one example -> [1 x output_width].
Tensor forward_input(const ModelBundle& bundle, const Tensor& input,
                     std::vector<Tensor>* capture = nullptr);

// Batched forward -> [batch x output_width] raw network outputs. With capture,
// receives per-layer activations with one row per example (flattened).
Tensor forward(const ModelBundle& bundle, std::span<const encoding::EncodedExample> examples,
               std::vector<Tensor>* capture = nullptr);

Tensor mlp_forward(const ModelBundle& bundle, const encoding::EncodedExample& example,
                   std::vector<Tensor>* capture = nullptr);
Tensor transformer_forward(const ModelBundle& bundle, const encoding::EncodedExample& example,
                           std::vector<Tensor>* capture = nullptr);

// Number of layers forward() can capture.
std::size_t capture_layer_count(const ModelBundle& bundle);

// Row i of the result is row permutation[i] of the input.
encoding::EncodedExample permute_input(const encoding::EncodedExample& example,
                                       std::span<const std::size_t> permutation);

inline constexpr const char* kBundleMagic = "CHARTAB-BUNDLE/1\n";

void write_bundle(std::ostream& out, const ModelBundle& bundle);
ModelBundle read_bundle(std::istream& in);
void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

std::string to_string(Task task);
Task task_from_string(const std::string& s);

}  // namespace chartab::models

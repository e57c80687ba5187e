#pragma once

// Data generation, CSV ingestion, splitting, training and evaluation.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chartab/encoding.hpp"
#include "chartab/models.hpp"

namespace chartab::pipeline {

using encoding::RawExample;

// ---- synthetic controls ----

inline constexpr std::size_t kControlFields = 9;

// Nine decimal-text fields a0..a8 and the three control targets
//   y1 = 10 a4,  y2 = (a3 / 100) a5,  y3 = sin(a2) a5 / (a4 + 0.01) + a7 / 10
// evaluated on the parsed text of the fields.
struct ControlRow {
  std::array<std::optional<std::string>, kControlFields> fields;
  double y1 = 0.0;
  double y2 = 0.0;
  double y3 = 0.0;
};

// Standard deviation of the error in a8, a noisy linear estimate of y1.
inline constexpr double kLinearEstimateNoise = 10.0;

// Fields a2, a3, a4, a5 and a7 feed the targets and are never missing;
// the others go missing independently with probability missing_prob.
// a8 = 10 a4 + N(0, kLinearEstimateNoise^2), rendered to one decimal.
std::vector<ControlRow> generate_controls(std::size_t n_rows, std::uint64_t seed,
                                          double missing_prob);

// Recomputes (y1, y2, y3) from the field text.
std::array<double, 3> control_targets(const ControlRow& row);

void write_controls_csv(std::ostream& out, std::span<const ControlRow> rows);
void write_controls_csv(const std::string& path, std::span<const ControlRow> rows);

// ---- CSV ----

struct CsvTable {
  std::vector<std::string> header;
  // Empty cells are nullopt.
  std::vector<std::vector<std::optional<std::string>>> rows;
};

// RFC 4180 style: header row required, quoted fields may contain commas,
// quotes ("") and newlines. Ragged rows raise DataError naming the line.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);
std::string csv_escape(const std::string& cell);

// ---- datasets ----

struct SchemaHints {
  std::map<std::string, std::size_t> widths;  // explicit per-column widths
  std::size_t width_cap = 8;                   // cap for inferred widths
  std::vector<std::string> drop_columns;       // excluded from the inputs
};

struct Dataset {
  models::Task task = models::Task::regression;
  std::string target_name;
  std::vector<std::string> field_names;
  std::vector<RawExample> rows;
  std::vector<std::string> class_labels;  // classification: sorted distinct labels
};

// Every non-target, non-dropped column becomes an input field.
Dataset load_csv(const std::string& path, const std::string& target_column, models::Task task,
                 const SchemaHints& hints = {});
Dataset dataset_from_table(const CsvTable& table, const std::string& target_column,
                           models::Task task, const SchemaHints& hints = {});

// Selects the bundle's input columns and target by name; class labels are
// mapped onto the bundle's label order.
Dataset dataset_for_bundle(const CsvTable& table, const models::ModelBundle& bundle);

// Widths from `rows` (normally the training split) with hints applied.
encoding::FieldSchema infer_schema(const Dataset& data, std::span<const RawExample> rows,
                                   const SchemaHints& hints = {});

struct SplitConfig {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

// Seeded shuffle, then the first round(n * fraction) indices train.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            const SplitConfig& config);
std::pair<std::vector<RawExample>, std::vector<RawExample>> split(std::span<const RawExample> rows,
                                                                  const SplitConfig& config);

// ---- training ----

enum class Architecture { mlp, transformer };

struct ModelOptions {
  Architecture architecture = Architecture::mlp;
  std::vector<std::size_t> hidden_widths = {512, 128, 32};
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t feedforward_dim = 0;  // 0 = 4 x model_dim
  std::size_t decoder_hidden = 256;
  bool positional_encoding = false;
  bool encoder_enabled = true;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  encoding::EncodingMode encoding = encoding::EncodingMode::structured;
  encoding::MissingMode missing = encoding::MissingMode::placeholder;
};

// Everything a bundle needs besides the architecture and parameters.
struct ModelContext {
  models::Task task = models::Task::regression;
  std::string target_name;
  encoding::FieldSchema schema;
  encoding::Vocabulary vocab;
  std::vector<std::string> class_labels;
};

// Fresh bundle with parameters initialised from `seed`.
models::ModelBundle make_bundle(const ModelContext& context, const ModelOptions& options,
                                const TrainConfig& config);

// Called after every epoch with the 1-based epoch number and its mean loss.
using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Fixed-epoch minibatch training: forward, loss (L1 or cross-entropy),
// backward, gradient clipping, Adam. Throws NumericalError on a non-finite loss.
models::ModelBundle train(std::span<const RawExample> rows, const ModelContext& context,
                          const ModelOptions& options, const TrainConfig& config,
                          const EpochCallback& on_epoch = {});

// Continues training an existing bundle in place for config.epochs epochs.
void train_bundle(models::ModelBundle& bundle, std::span<const RawExample> rows,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// ---- evaluation ----

struct MetricsReport {
  models::Task task = models::Task::regression;
  std::size_t count = 0;
  // Mean training-objective value: L1 in target units, or cross-entropy.
  double loss = 0.0;
  // Classification.
  double accuracy = 0.0;
  std::vector<std::size_t> class_counts;
  std::vector<std::size_t> class_correct;
  // Regression.
  double mean_l1 = 0.0;
  double pearson = 0.0;
  std::vector<std::pair<double, double>> pairs;  // (predicted, actual)
};

// Regression predictions in target units.
std::vector<double> predict(const models::ModelBundle& bundle, std::span<const RawExample> rows);
// Class probabilities per row.
std::vector<std::vector<double>> predict_proba(const models::ModelBundle& bundle,
                                               std::span<const RawExample> rows);

MetricsReport evaluate(const models::ModelBundle& bundle, std::span<const RawExample> rows);

double pearson(std::span<const double> x, std::span<const double> y);

void write_metrics(std::ostream& out, const MetricsReport& report,
                   const std::vector<std::string>& class_labels = {});
void write_pairs_csv(std::ostream& out, const MetricsReport& report);

}  // namespace chartab::pipeline

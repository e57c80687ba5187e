#include "chartab/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "chartab/analysis.hpp"
#include "chartab/error.hpp"
#include "chartab/pipeline.hpp"

namespace chartab::cli {

namespace {

namespace fs = std::filesystem;
using encoding::RawExample;
using models::ModelBundle;

std::ofstream open_output(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

// Writes the fully resolved options of `command` next to `output`.
void write_resolved_config(const CLI::App& command, const std::string& output) {
  auto out = open_output(output + ".config.toml");
  out << '[' << command.get_name() << "]\n" << command.config_to_str(true, false);
}

// model.bundle + 7 -> model.seed7.bundle
std::string seeded_path(const std::string& path, std::uint64_t seed) {
  fs::path p(path);
  fs::path name = p.stem();
  name += ".seed" + std::to_string(seed);
  name += p.extension();
  return (p.parent_path() / name).string();
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::map<std::string, encoding::EncodingMode> kEncodings = {
    {"structured", encoding::EncodingMode::structured},
    {"unstructured", encoding::EncodingMode::unstructured}};
const std::map<std::string, encoding::MissingMode> kMissing = {
    {"placeholder", encoding::MissingMode::placeholder}, {"zero", encoding::MissingMode::zero}};
const std::map<std::string, pipeline::Architecture> kModels = {
    {"mlp", pipeline::Architecture::mlp}, {"transformer", pipeline::Architecture::transformer}};
const std::map<std::string, analysis::Method> kMethods = {
    {"occlusion", analysis::Method::occlusion},
    {"gradient", analysis::Method::gradient_input},
    {"combined", analysis::Method::combined}};
const std::map<std::string, analysis::Aggregation> kAggregations = {
    {"max", analysis::Aggregation::max}, {"average", analysis::Aggregation::average}};

template <typename T>
std::vector<std::string> keys(const std::map<std::string, T>& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

// ---- generate ----

struct GenerateArgs {
  std::size_t rows = 0;
  std::uint64_t seed = 0;
  double missing_prob = 0.0;
  std::string out;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  auto* cmd = app.add_subcommand("generate", "Write a synthetic control dataset (a0..a8, y1..y3)");
  cmd->add_option("--rows", a.rows, "Number of rows")->required()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Random seed")->required();
  cmd->add_option("--missing-prob", a.missing_prob,
                  "Probability that each optional field (a0, a1, a6, a8) is empty")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.999999));
  cmd->add_option("--out", a.out, "Output CSV path")->required();
}

void run_generate(const CLI::App& cmd, const GenerateArgs& a, std::ostream& out) {
  const auto rows = pipeline::generate_controls(a.rows, a.seed, a.missing_prob);
  auto file = open_output(a.out);
  pipeline::write_controls_csv(file, rows);
  write_resolved_config(cmd, a.out);
  out << "wrote " << rows.size() << " rows to " << a.out << '\n';
}

// ---- shared bundle/data handling ----

struct DataArgs {
  std::string bundle;
  std::string data;
  std::string split = "test";
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--bundle", a.bundle, "Trained model bundle")->required();
  cmd->add_option("--data", a.data, "CSV with the model's input columns and target")->required();
  cmd->add_option("--split", a.split, "Rows to use: the recorded train/test split, or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "train", "test"}));
}

std::vector<RawExample> select_rows(const ModelBundle& bundle, const DataArgs& a) {
  const auto data = pipeline::dataset_for_bundle(pipeline::read_csv(a.data), bundle);
  if (a.split == "all") return data.rows;
  pipeline::SplitConfig split;
  split.seed = bundle.training.split_seed;
  split.train_fraction = bundle.training.train_fraction;
  auto [train, test] = pipeline::split(data.rows, split);
  return a.split == "train" ? train : test;
}

std::vector<encoding::EncodedExample> encode_sample(const ModelBundle& bundle,
                                                    std::span<const RawExample> rows,
                                                    std::size_t k, std::uint64_t seed) {
  std::vector<encoding::EncodedExample> out;
  for (std::size_t i : analysis::sample_indices(rows.size(), k, seed)) {
    out.push_back(models::encode_row(bundle, rows[i]));
  }
  return out;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string task;
  std::string target;
  std::string model = "mlp";
  std::string encoding = "structured";
  std::string missing = "placeholder";
  std::size_t epochs = 30;
  std::vector<std::uint64_t> seeds;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double clip_norm = 1.0;
  double train_fraction = 0.8;
  std::vector<std::size_t> hidden = {512, 128, 32};
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_dim = 0;
  std::size_t decoder_hidden = 256;
  bool positional = false;
  bool no_encoder = false;
  std::vector<std::string> widths;
  std::size_t width_cap = 8;
  std::vector<std::string> drop;
  std::string out;
  bool verbose = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a model bundle on a CSV table");
  cmd->add_option("--data", a.data, "Training CSV")->required();
  cmd->add_option("--task", a.task,
                  "control1|control2|control3 (regress y1|y2|y3) or classify (needs --target)")
      ->required()
      ->check(CLI::IsMember({"control1", "control2", "control3", "classify"}));
  cmd->add_option("--target", a.target, "Target column for --task classify");
  cmd->add_option("--model", a.model, "Architecture")
      ->capture_default_str()
      ->check(CLI::IsMember(keys(kModels)));
  cmd->add_option("--encoding", a.encoding, "Character encoding scheme")
      ->capture_default_str()
      ->check(CLI::IsMember(keys(kEncodings)));
  cmd->add_option("--missing", a.missing, "Filler for unused character slots")
      ->capture_default_str()
      ->check(CLI::IsMember(keys(kMissing)));
  cmd->add_option("--epochs", a.epochs, "Training epochs")->capture_default_str()->check(
      CLI::PositiveNumber);
  cmd->add_option("--seed,--seeds", a.seeds,
                  "Random seed for split, initialisation and batching; "
                  "several values train one bundle per seed")
      ->required()
      ->delimiter(',');
  cmd->add_option("--batch-size", a.batch_size, "Minibatch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", a.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--clip-norm", a.clip_norm, "Global gradient norm limit")->capture_default_str();
  cmd->add_option("--train-fraction", a.train_fraction, "Fraction of rows used for training")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--hidden", a.hidden, "MLP hidden widths")->capture_default_str()->delimiter(',');
  cmd->add_option("--layers", a.layers, "Transformer encoder layers")->capture_default_str();
  cmd->add_option("--heads", a.heads, "Attention heads")->capture_default_str()->check(
      CLI::PositiveNumber);
  cmd->add_option("--ff-dim", a.ff_dim, "Encoder feed-forward width (0: 4 x model width)")
      ->capture_default_str();
  cmd->add_option("--decoder-hidden", a.decoder_hidden, "Transformer decoder hidden width")
      ->capture_default_str();
  cmd->add_flag("--positional-encoding", a.positional, "Add sinusoidal position encodings");
  cmd->add_flag("--no-encoder", a.no_encoder, "Feed the input straight to the decoder");
  cmd->add_option("--width", a.widths, "Fixed character width for a column, as NAME=WIDTH");
  cmd->add_option("--width-cap", a.width_cap, "Cap on inferred column widths")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--drop", a.drop, "Column to exclude from the inputs");
  cmd->add_option("--out", a.out, "Output bundle path")->required();
  cmd->add_flag("--verbose", a.verbose, "Print the loss after every epoch");
}

pipeline::SchemaHints schema_hints(const TrainArgs& a) {
  pipeline::SchemaHints hints;
  hints.width_cap = a.width_cap;
  hints.drop_columns = a.drop;
  for (const auto& w : a.widths) {
    const auto eq = w.find('=');
    std::size_t width = 0;
    try {
      if (eq == std::string::npos) throw std::invalid_argument(w);
      std::size_t used = 0;
      width = std::stoul(w.substr(eq + 1), &used);
      if (used != w.size() - eq - 1 || width == 0) throw std::invalid_argument(w);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--width", "expected NAME=WIDTH with a positive width, got '" + w + "'");
    }
    hints.widths[w.substr(0, eq)] = width;
  }
  return hints;
}

void run_train(const CLI::App& cmd, const TrainArgs& a, std::ostream& out) {
  std::string target = a.target;
  models::Task task = models::Task::regression;
  pipeline::SchemaHints hints = schema_hints(a);
  if (a.task == "classify") {
    if (target.empty()) throw CLI::RequiredError("--target (needed by --task classify)");
    task = models::Task::classification;
  } else {
    if (!target.empty()) throw CLI::ValidationError("--target", "only valid with --task classify");
    target = "y" + a.task.substr(a.task.size() - 1);
    for (const char* y : {"y1", "y2", "y3"}) {
      if (target != y) hints.drop_columns.emplace_back(y);
    }
  }
  const auto data = pipeline::load_csv(a.data, target, task, hints);

  pipeline::ModelOptions options;
  options.architecture = kModels.at(a.model);
  options.hidden_widths = a.hidden;
  options.n_layers = a.layers;
  options.n_heads = a.heads;
  options.feedforward_dim = a.ff_dim;
  options.decoder_hidden = a.decoder_hidden;
  options.positional_encoding = a.positional;
  options.encoder_enabled = !a.no_encoder;

  pipeline::ModelContext context;
  context.task = task;
  context.target_name = target;
  context.vocab = encoding::build_vocabulary(data.rows);
  context.class_labels = data.class_labels;

  const bool many = a.seeds.size() > 1;
  std::ofstream summary;
  if (many) {
    summary = open_output(a.out + ".seeds.csv");
    summary << "seed,bundle,train_loss,test_loss,test_accuracy,test_pearson\n";
  }
  for (std::uint64_t seed : a.seeds) {
    pipeline::SplitConfig split;
    split.seed = seed;
    split.train_fraction = a.train_fraction;
    const auto [train_rows, test_rows] = pipeline::split(data.rows, split);
    context.schema = pipeline::infer_schema(data, train_rows, hints);

    pipeline::TrainConfig config;
    config.epochs = a.epochs;
    config.batch_size = a.batch_size;
    config.learning_rate = a.learning_rate;
    config.clip_norm = a.clip_norm;
    config.seed = seed;
    config.encoding = kEncodings.at(a.encoding);
    config.missing = kMissing.at(a.missing);

    ModelBundle bundle = pipeline::make_bundle(context, options, config);
    bundle.training.split_seed = seed;
    bundle.training.train_fraction = a.train_fraction;
    pipeline::train_bundle(bundle, train_rows, config, [&](std::size_t epoch, double loss) {
      if (a.verbose) out << "seed " << seed << " epoch " << epoch << " loss " << loss << '\n';
    });

    const std::string path = many ? seeded_path(a.out, seed) : a.out;
    models::save_bundle(path, bundle);
    const auto metrics = pipeline::evaluate(bundle, test_rows);
    {
      auto file = open_output(path + ".metrics");
      file << "seed=" << seed << '\n' << "train_loss=" << format_value(bundle.training.final_loss) << '\n';
      pipeline::write_metrics(file, metrics, bundle.class_labels);
    }
    if (many) {
      summary << seed << ',' << pipeline::csv_escape(path) << ','
              << format_value(bundle.training.final_loss) << ',' << format_value(metrics.loss) << ','
              << format_value(metrics.accuracy) << ',' << format_value(metrics.pearson) << '\n';
    }
    out << "seed " << seed << ": train loss " << bundle.training.final_loss << ", test loss "
        << metrics.loss;
    if (task == models::Task::classification) {
      out << ", test accuracy " << metrics.accuracy;
    } else {
      out << ", test correlation " << metrics.pearson;
    }
    out << " -> " << path << '\n';
  }
  write_resolved_config(cmd, a.out);
}

// ---- evaluate ----

struct EvaluateArgs {
  DataArgs data;
  std::string out;
  std::string pairs;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Score a bundle on a CSV table");
  add_data_options(cmd, a.data);
  cmd->add_option("--out", a.out, "Metrics output (key=value lines)")->required();
  cmd->add_option("--pairs", a.pairs, "Optional predicted,actual CSV (regression)");
}

void run_evaluate(const CLI::App& cmd, const EvaluateArgs& a, std::ostream& out) {
  const ModelBundle bundle = models::load_bundle(a.data.bundle);
  const auto rows = select_rows(bundle, a.data);
  const auto metrics = pipeline::evaluate(bundle, rows);
  {
    auto file = open_output(a.out);
    pipeline::write_metrics(file, metrics, bundle.class_labels);
  }
  if (!a.pairs.empty()) {
    auto file = open_output(a.pairs);
    pipeline::write_pairs_csv(file, metrics);
  }
  write_resolved_config(cmd, a.out);
  out << metrics.count << " rows, loss " << metrics.loss;
  if (bundle.task == models::Task::classification) {
    out << ", accuracy " << metrics.accuracy << '\n';
  } else {
    out << ", correlation " << metrics.pearson << '\n';
  }
}

// ---- attribute ----

struct AttributeArgs {
  DataArgs data;
  std::string method = "combined";
  std::size_t window = 2;
  std::size_t stride = 1;
  std::size_t samples = 100;
  std::string aggregation = "max";
  std::uint64_t seed = 0;
  std::string out;
  std::string characters_out;
};

void add_attribute(CLI::App& app, AttributeArgs& a) {
  auto* cmd = app.add_subcommand("attribute", "Per-column input attribution averaged over rows");
  add_data_options(cmd, a.data);
  cmd->add_option("--method", a.method, "Attribution method")
      ->capture_default_str()
      ->check(CLI::IsMember(keys(kMethods)));
  cmd->add_option("--window", a.window, "Occluded characters per window")
      ->capture_default_str()
      ->check(CLI::Range(1, 4));
  cmd->add_option("--stride", a.stride, "Occlusion window stride")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--samples", a.samples, "Rows averaged over")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--aggregation", a.aggregation, "Per-column reduction over characters")
      ->capture_default_str()
      ->check(CLI::IsMember(keys(kAggregations)));
  cmd->add_option("--seed", a.seed, "Seed for choosing the rows")->capture_default_str();
  cmd->add_option("--out", a.out, "column_name,value CSV")->required();
  cmd->add_option("--characters-out", a.characters_out, "Optional position,character,value CSV");
}

void run_attribute(const CLI::App& cmd, const AttributeArgs& a, std::ostream& out) {
  const ModelBundle bundle = models::load_bundle(a.data.bundle);
  if (bundle.encoding != encoding::EncodingMode::structured) {
    throw DataError("attribution needs a bundle trained on the structured encoding");
  }
  const auto rows = select_rows(bundle, a.data);
  if (rows.empty()) throw DataError("no rows selected");
  const auto examples = encode_sample(bundle, rows, a.samples, a.seed);
  const auto report =
      analysis::aggregate_attribution(bundle, examples, kMethods.at(a.method),
                                      kAggregations.at(a.aggregation), a.window, a.stride);
  {
    auto file = open_output(a.out);
    analysis::write_column_csv(file, report, bundle.schema);
  }
  if (!a.characters_out.empty()) {
    auto file = open_output(a.characters_out);
    analysis::write_character_csv(file, report, bundle.vocab,
                                  examples.size() == 1 ? &examples.front() : nullptr);
  }
  write_resolved_config(cmd, a.out);
  out << report.sample_count << " rows, top column "
      << bundle.schema.fields()[report.argmax_column()].name << '\n';
}

// ---- embed ----

struct EmbedArgs {
  DataArgs data;
  std::size_t layer = 3;
  std::size_t k = 200;
  std::uint64_t seed = 0;
  std::string out;
};

void add_embed(CLI::App& app, EmbedArgs& a) {
  auto* cmd = app.add_subcommand("embed", "Pairwise hidden-layer distances against target distances");
  add_data_options(cmd, a.data);
  cmd->add_option("--layer", a.layer, "Captured layer, counted from 1")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--k", a.k, "Rows sampled; all pairs among them are reported")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()));
  cmd->add_option("--seed", a.seed, "Seed for choosing the rows")->capture_default_str();
  cmd->add_option("--out", a.out, "embedding_distance,reference_distance CSV")->required();
}

void run_embed(const CLI::App& cmd, const EmbedArgs& a, std::ostream& out) {
  const ModelBundle bundle = models::load_bundle(a.data.bundle);
  const auto rows = select_rows(bundle, a.data);
  std::vector<RawExample> chosen;
  for (std::size_t i : analysis::sample_indices(rows.size(), a.k, a.seed)) chosen.push_back(rows[i]);
  const auto pairs = analysis::pairwise_embedding(bundle, chosen, a.layer);
  {
    auto file = open_output(a.out);
    analysis::write_pairs_csv(file, pairs);
  }
  const std::string summary = "layer=" + std::to_string(pairs.layer_id) +
                              "\nsamples=" + std::to_string(chosen.size()) +
                              "\npairs=" + std::to_string(pairs.pairs.size()) +
                              "\npearson=" + format_value(pairs.correlation) + "\n";
  {
    auto file = open_output(a.out + ".summary");
    file << summary;
  }
  write_resolved_config(cmd, a.out);
  out << summary;
}

// ---- permute ----

struct PermuteArgs {
  DataArgs data;
  std::size_t n_perm = 1;
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::string out;
};

void add_permute(CLI::App& app, PermuteArgs& a) {
  auto* cmd = app.add_subcommand("permute", "Output change under random reorderings of input rows");
  add_data_options(cmd, a.data);
  cmd->add_option("--n-perm", a.n_perm, "Permutations per row")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--samples", a.samples, "Rows tested")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Seed for rows and permutations")->capture_default_str();
  cmd->add_option("--out", a.out, "example,permutation,delta CSV")->required();
}

void run_permute(const CLI::App& cmd, const PermuteArgs& a, std::ostream& out) {
  const ModelBundle bundle = models::load_bundle(a.data.bundle);
  if (bundle.encoding != encoding::EncodingMode::structured) {
    throw DataError("the permutation test needs a bundle trained on the structured encoding");
  }
  const auto rows = select_rows(bundle, a.data);
  if (rows.empty()) throw DataError("no rows selected");
  const auto examples = encode_sample(bundle, rows, a.samples, a.seed);
  const auto report = analysis::permutation_test(bundle, examples, a.n_perm, a.seed);
  {
    auto file = open_output(a.out);
    file << "example,permutation,delta\n";
    for (std::size_t i = 0; i < report.deltas.size(); ++i) {
      file << i / a.n_perm << ',' << i % a.n_perm << ',' << format_value(report.deltas[i]) << '\n';
    }
  }
  write_resolved_config(cmd, a.out);
  std::size_t changed = 0;
  for (double d : report.deltas) changed += d > 1e-6 ? 1 : 0;
  out << "trials=" << report.deltas.size() << "\nchanged=" << changed
      << "\nmin=" << format_value(report.min) << "\nmean=" << format_value(report.mean)
      << "\nmax=" << format_value(report.max) << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Learning from raw table text via one-hot character encodings", "chartab");
  app.require_subcommand(1);
  app.allow_extras(false);
  // Subcommands inherit fallthrough, so --config may follow the subcommand name.
  app.fallthrough();
  app.set_config("--config", "",
                 "TOML file whose [subcommand] section supplies option values; flags take precedence");

  GenerateArgs generate;
  TrainArgs train;
  EvaluateArgs evaluate;
  AttributeArgs attribute;
  EmbedArgs embed;
  PermuteArgs permute;
  add_generate(app, generate);
  add_train(app, train);
  add_evaluate(app, evaluate);
  add_attribute(app, attribute);
  add_embed(app, embed);
  add_permute(app, permute);
  for (CLI::App* sub : app.get_subcommands({})) {
    sub->footer("--config FILE reads option values from the [" + sub->get_name() +
                "] section of a TOML file; explicit flags take precedence.");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (name == "generate") run_generate(*cmd, generate, out);
    if (name == "train") run_train(*cmd, train, out);
    if (name == "evaluate") run_evaluate(*cmd, evaluate, out);
    if (name == "attribute") run_attribute(*cmd, attribute, out);
    if (name == "embed") run_embed(*cmd, embed, out);
    if (name == "permute") run_permute(*cmd, permute, out);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace chartab::cli

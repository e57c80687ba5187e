#include <cstring>
#include <fstream>
#include <sstream>

#include "chartab/error.hpp"
#include "chartab/models.hpp"

namespace chartab::models {

namespace {

using json = nlohmann::ordered_json;

json spec_to_json(const ModelSpec& spec) {
  if (const auto* mlp = std::get_if<MlpSpec>(&spec)) {
    return {{"type", "mlp"},
            {"input_width", mlp->input_width},
            {"hidden_widths", mlp->hidden_widths},
            {"output_width", mlp->output_width}};
  }
  const auto& t = std::get<TransformerSpec>(spec);
  return {{"type", "transformer"},
          {"seq_len", t.seq_len},
          {"onehot_dim", t.onehot_dim},
          {"n_layers", t.n_layers},
          {"n_heads", t.n_heads},
          {"model_dim", t.model_dim},
          {"feedforward_dim", t.feedforward_dim},
          {"decoder_hidden", t.decoder_hidden},
          {"output_width", t.output_width},
          {"positional_encoding", t.positional_encoding},
          {"encoder_enabled", t.encoder_enabled}};
}

ModelSpec spec_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "mlp") {
    MlpSpec s;
    s.input_width = j.at("input_width").get<std::size_t>();
    s.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
    s.output_width = j.at("output_width").get<std::size_t>();
    return s;
  }
  if (type != "transformer") throw DataError("unknown architecture '" + type + "'");
  TransformerSpec t;
  t.seq_len = j.at("seq_len").get<std::size_t>();
  t.onehot_dim = j.at("onehot_dim").get<std::size_t>();
  t.n_layers = j.at("n_layers").get<std::size_t>();
  t.n_heads = j.at("n_heads").get<std::size_t>();
  t.model_dim = j.at("model_dim").get<std::size_t>();
  t.feedforward_dim = j.at("feedforward_dim").get<std::size_t>();
  t.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
  t.output_width = j.at("output_width").get<std::size_t>();
  t.positional_encoding = j.at("positional_encoding").get<bool>();
  t.encoder_enabled = j.at("encoder_enabled").get<bool>();
  return finalize(t);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("bundle truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void write_bundle(std::ostream& out, const ModelBundle& b) {
  const json header = {
      {"architecture", spec_to_json(b.spec)},
      {"task", to_string(b.task)},
      {"encoding", b.encoding == encoding::EncodingMode::structured ? "structured" : "unstructured"},
      {"missing", b.missing == encoding::MissingMode::placeholder ? "placeholder" : "zero"},
      {"sequence_length", b.sequence_length},
      {"target", {{"name", b.target_name}, {"shift", b.target_shift}, {"scale", b.target_scale}}},
      {"class_labels", b.class_labels},
      {"schema", encoding::to_json(b.schema)},
      {"vocabulary", encoding::to_json(b.vocab)},
      {"training",
       {{"epochs", b.training.epochs},
        {"seed", b.training.seed},
        {"batch_size", b.training.batch_size},
        {"learning_rate", b.training.learning_rate},
        {"clip_norm", b.training.clip_norm},
        {"train_rows", b.training.train_rows},
        {"split_seed", b.training.split_seed},
        {"train_fraction", b.training.train_fraction},
        {"epoch_losses", b.training.epoch_losses},
        {"final_loss", b.training.final_loss}}}};
  const std::string text = header.dump(2);
  out.write(kBundleMagic, static_cast<std::streamsize>(std::strlen(kBundleMagic)));
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  engine::write_tensors(out, b.parameters.entries());
  if (!out) throw DataError("failed writing bundle");
}

ModelBundle read_bundle(std::istream& in) {
  const std::size_t magic_len = std::strlen(kBundleMagic);
  std::string magic(magic_len, '\0');
  if (!in.read(magic.data(), static_cast<std::streamsize>(magic_len)) || magic != kBundleMagic) {
    throw DataError("not a model bundle or unsupported bundle version (expected " +
                    std::string(kBundleMagic, magic_len - 1) + ")");
  }
  const std::uint64_t len = get_u64(in);
  if (len > (1ull << 32)) throw DataError("bundle header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("bundle truncated");

  ModelBundle b;
  try {
    const json h = json::parse(text);
    b.spec = spec_from_json(h.at("architecture"));
    b.task = task_from_string(h.at("task").get<std::string>());
    b.encoding = h.at("encoding").get<std::string>() == "structured"
                     ? encoding::EncodingMode::structured
                     : encoding::EncodingMode::unstructured;
    b.missing = h.at("missing").get<std::string>() == "placeholder"
                    ? encoding::MissingMode::placeholder
                    : encoding::MissingMode::zero;
    b.sequence_length = h.at("sequence_length").get<std::size_t>();
    b.target_name = h.at("target").at("name").get<std::string>();
    b.target_shift = h.at("target").at("shift").get<double>();
    b.target_scale = h.at("target").at("scale").get<double>();
    b.class_labels = h.at("class_labels").get<std::vector<std::string>>();
    b.schema = encoding::schema_from_json(h.at("schema"));
    b.vocab = encoding::vocabulary_from_json(h.at("vocabulary"));
    const auto& t = h.at("training");
    b.training.epochs = t.at("epochs").get<std::size_t>();
    b.training.seed = t.at("seed").get<std::uint64_t>();
    b.training.batch_size = t.at("batch_size").get<std::size_t>();
    b.training.learning_rate = t.at("learning_rate").get<double>();
    b.training.clip_norm = t.at("clip_norm").get<double>();
    b.training.train_rows = t.at("train_rows").get<std::size_t>();
    b.training.split_seed = t.at("split_seed").get<std::uint64_t>();
    b.training.train_fraction = t.at("train_fraction").get<double>();
    b.training.epoch_losses = t.at("epoch_losses").get<std::vector<double>>();
    b.training.final_loss = t.at("final_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bundle header: ") + e.what());
  }
  for (auto& [name, tensor] : engine::read_tensors(in)) {
    tensor.set_requires_grad(true);
    b.parameters.add(name, tensor);
  }
  check_parameters(b.spec, b.parameters);
  return b;
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_bundle(out, bundle);
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return read_bundle(in);
}

}  // namespace chartab::models

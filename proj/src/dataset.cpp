#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <iterator>
#include <set>

#include "chartab/error.hpp"
#include "chartab/pipeline.hpp"
#include "chartab/rng.hpp"

namespace chartab::pipeline {

CsvTable parse_csv(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::optional<std::string>>> records;
  std::vector<std::size_t> record_lines;

  std::vector<std::optional<std::string>> record;
  std::string cell;
  bool quoted = false;      // inside quotes
  bool was_quoted = false;  // current cell used quotes
  bool any = false;         // current record has content
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_cell = [&] {
    if (cell.empty()) {
      record.emplace_back(std::nullopt);
    } else {
      record.emplace_back(cell);
    }
    cell.clear();
    was_quoted = false;
  };
  auto end_record = [&] {
    end_cell();
    records.push_back(std::move(record));
    record_lines.push_back(record_line);
    record.clear();
    any = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    if (!any && c != '\n' && c != '\r') {
      any = true;
      record_line = line;
    }
    switch (c) {
      case '"':
        if (!cell.empty() || was_quoted) {
          throw DataError("line " + std::to_string(line) + ": stray quote inside unquoted field");
        }
        quoted = was_quoted = true;
        break;
      case ',':
        end_cell();
        break;
      case '\r':
        break;
      case '\n':
        if (any || !record.empty()) end_record();
        ++line;
        break;
      default:
        cell.push_back(c);
    }
  }
  if (quoted) throw DataError("line " + std::to_string(record_line) + ": unterminated quote");
  if (any || !record.empty()) end_record();

  if (records.empty()) throw DataError("CSV is empty (a header row is required)");
  CsvTable table;
  for (auto& h : records[0]) {
    if (!h) throw DataError("CSV header has an empty column name");
    table.header.push_back(*h);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw DataError("line " + std::to_string(record_lines[r]) + ": expected " +
                      std::to_string(table.header.size()) + " fields, found " +
                      std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return parse_csv(in);
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Dataset dataset_from_table(const CsvTable& table, const std::string& target_column,
                           models::Task task, const SchemaHints& hints) {
  const auto target_it = std::find(table.header.begin(), table.header.end(), target_column);
  if (target_it == table.header.end()) {
    throw DataError("target column '" + target_column + "' not found in header");
  }
  const auto target_index = static_cast<std::size_t>(target_it - table.header.begin());
  for (const auto& d : hints.drop_columns) {
    if (std::find(table.header.begin(), table.header.end(), d) == table.header.end()) {
      throw DataError("column '" + d + "' to drop not found in header");
    }
  }

  Dataset data;
  data.task = task;
  data.target_name = target_column;
  std::vector<std::size_t> inputs;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (c == target_index ||
        std::find(hints.drop_columns.begin(), hints.drop_columns.end(), name) !=
            hints.drop_columns.end()) {
      continue;
    }
    inputs.push_back(c);
    data.field_names.push_back(name);
  }
  if (inputs.empty()) throw DataError("no input columns remain");

  if (task == models::Task::classification) {
    std::set<std::string> labels;
    for (const auto& row : table.rows) {
      if (row[target_index]) labels.insert(*row[target_index]);
    }
    data.class_labels.assign(labels.begin(), labels.end());
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    RawExample ex;
    for (std::size_t c : inputs) ex.values.push_back(row[c]);
    const auto& target = row[target_index];
    if (!target) throw DataError("data row " + std::to_string(r + 1) + ": missing target");
    if (task == models::Task::classification) {
      const auto pos = std::lower_bound(data.class_labels.begin(), data.class_labels.end(), *target);
      ex.target = static_cast<double>(pos - data.class_labels.begin());
    } else {
      char* end = nullptr;
      const double v = std::strtod(target->c_str(), &end);
      if (end == target->c_str() || *end != '\0' || !std::isfinite(v)) {
        throw DataError("data row " + std::to_string(r + 1) + ": target '" + *target +
                        "' is not a finite number");
      }
      ex.target = v;
    }
    data.rows.push_back(std::move(ex));
  }
  return data;
}

Dataset load_csv(const std::string& path, const std::string& target_column, models::Task task,
                 const SchemaHints& hints) {
  return dataset_from_table(read_csv(path), target_column, task, hints);
}

Dataset dataset_for_bundle(const CsvTable& table, const models::ModelBundle& bundle) {
  SchemaHints hints;
  const auto& fields = bundle.schema.fields();
  for (const auto& name : table.header) {
    if (name == bundle.target_name) continue;
    const bool used = std::any_of(fields.begin(), fields.end(),
                                  [&](const encoding::Field& f) { return f.name == name; });
    if (!used) hints.drop_columns.push_back(name);
  }
  Dataset data = dataset_from_table(table, bundle.target_name, bundle.task, hints);
  if (data.field_names.size() != fields.size()) {
    throw DataError("data has " + std::to_string(data.field_names.size()) +
                    " of the model's " + std::to_string(fields.size()) + " input columns");
  }
  for (std::size_t f = 0; f < fields.size(); ++f) {
    if (data.field_names[f] != fields[f].name) {
      throw DataError("column '" + data.field_names[f] + "' is out of order; the model expects '" +
                      fields[f].name + "'");
    }
  }
  if (bundle.task == models::Task::classification) {
    for (auto& row : data.rows) {
      const auto& label = data.class_labels[static_cast<std::size_t>(*row.target)];
      const auto it = std::find(bundle.class_labels.begin(), bundle.class_labels.end(), label);
      if (it == bundle.class_labels.end()) {
        throw DataError("class label '" + label + "' was not seen in training");
      }
      row.target = static_cast<double>(it - bundle.class_labels.begin());
    }
    data.class_labels = bundle.class_labels;
  }
  return data;
}

encoding::FieldSchema infer_schema(const Dataset& data, std::span<const RawExample> rows,
                                   const SchemaHints& hints) {
  auto schema = encoding::infer_schema(data.field_names, rows, hints.width_cap);
  if (hints.widths.empty()) return schema;
  std::vector<encoding::Field> fields = schema.fields();
  for (const auto& [name, width] : hints.widths) {
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const encoding::Field& f) { return f.name == name; });
    if (it == fields.end()) throw DataError("width hint for unknown column '" + name + "'");
    it->width = width;
  }
  return encoding::FieldSchema(std::move(fields));
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, const SplitConfig& config) {
  if (n < 2) throw DataError("split needs at least 2 rows");
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw DataError("train fraction must be in (0, 1)");
  }
  const auto n_train =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.train_fraction));
  if (n_train == 0 || n_train == n) {
    throw DataError("train fraction " + std::to_string(config.train_fraction) + " of " +
                    std::to_string(n) + " rows leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (config.shuffle) {
    Rng rng(config.seed);
    rng.shuffle(std::span<std::size_t>(order));
  }
  return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<long>(n_train)),
          std::vector<std::size_t>(order.begin() + static_cast<long>(n_train), order.end())};
}

std::pair<std::vector<RawExample>, std::vector<RawExample>> split(std::span<const RawExample> rows,
                                                                  const SplitConfig& config) {
  const auto [train_idx, test_idx] = split_indices(rows.size(), config);
  std::pair<std::vector<RawExample>, std::vector<RawExample>> out;
  for (std::size_t i : train_idx) out.first.push_back(rows[i]);
  for (std::size_t i : test_idx) out.second.push_back(rows[i]);
  return out;
}

}  // namespace chartab::pipeline

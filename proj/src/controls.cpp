#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "chartab/error.hpp"
#include "chartab/pipeline.hpp"
#include "chartab/rng.hpp"

namespace chartab::pipeline {

namespace {

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

double parse_field(const ControlRow& row, std::size_t index) {
  const auto& text = row.fields[index];
  if (!text) throw DataError("control field a" + std::to_string(index) + " is missing");
  char* end = nullptr;
  const double v = std::strtod(text->c_str(), &end);
  if (end == text->c_str() || *end != '\0') {
    throw DataError("control field a" + std::to_string(index) + " is not numeric: '" + *text + "'");
  }
  return v;
}

constexpr bool kTargetField[kControlFields] = {false, false, true, true, true,
                                               true,  false, true, false};

}  // namespace

std::array<double, 3> control_targets(const ControlRow& row) {
  const double a2 = parse_field(row, 2);
  const double a3 = parse_field(row, 3);
  const double a4 = parse_field(row, 4);
  const double a5 = parse_field(row, 5);
  const double a7 = parse_field(row, 7);
  return {10.0 * a4, (a3 / 100.0) * a5, std::sin(a2) * a5 / (a4 + 0.01) + a7 / 10.0};
}

std::vector<ControlRow> generate_controls(std::size_t n_rows, std::uint64_t seed,
                                          double missing_prob) {
  if (n_rows < 1) throw DataError("generate_controls: n_rows must be at least 1");
  if (!(missing_prob >= 0.0 && missing_prob < 1.0)) {
    throw DataError("generate_controls: missing_prob must be in [0, 1)");
  }
  Rng rng(seed);
  std::vector<ControlRow> rows(n_rows);
  for (auto& row : rows) {
    auto& f = row.fields;
    f[0] = std::to_string(rng.integer(1, 99));
    char date[16];
    std::snprintf(date, sizeof date, "%04d%02d%02d", static_cast<int>(rng.integer(2010, 2019)),
                  static_cast<int>(rng.integer(1, 12)), static_cast<int>(rng.integer(1, 28)));
    f[1] = date;
    f[2] = fixed(rng.uniform(0.0, 6.28), 2);
    f[3] = fixed(rng.uniform(0.0, 100.0), 1);
    f[4] = fixed(rng.uniform(0.0, 10.0), 1);
    f[5] = fixed(rng.uniform(0.0, 50.0), 1);
    f[6] = std::to_string(rng.integer(0, 999));
    f[7] = fixed(rng.uniform(0.0, 100.0), 1);
    f[8] = fixed(10.0 * parse_field(row, 4) + rng.normal(0.0, kLinearEstimateNoise), 1);
    for (std::size_t i = 0; i < kControlFields; ++i) {
      // Always draw so the field values do not depend on missing_prob.
      const double u = rng.uniform01();
      if (!kTargetField[i] && u < missing_prob) f[i].reset();
    }
    const auto y = control_targets(row);
    row.y1 = y[0];
    row.y2 = y[1];
    row.y3 = y[2];
  }
  return rows;
}

void write_controls_csv(std::ostream& out, std::span<const ControlRow> rows) {
  for (std::size_t i = 0; i < kControlFields; ++i) out << 'a' << i << ',';
  out << "y1,y2,y3\n";
  char buf[64];
  for (const auto& row : rows) {
    for (const auto& f : row.fields) out << (f ? csv_escape(*f) : "") << ',';
    const double targets[] = {row.y1, row.y2, row.y3};
    for (std::size_t k = 0; k < 3; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", targets[k]);
      out << buf << (k < 2 ? ',' : '\n');
    }
  }
}

void write_controls_csv(const std::string& path, std::span<const ControlRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_controls_csv(out, rows);
}

}  // namespace chartab::pipeline

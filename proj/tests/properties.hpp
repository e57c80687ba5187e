#pragma once

// Randomized property checks shared by the unit tests and the acceptance
// runner. Each returns the number of failing cases.

#include <cstddef>
#include <cstdint>
#include <string>

#include "chartab/encoding.hpp"
#include "chartab/models.hpp"
#include "chartab/rng.hpp"

namespace props {

struct Outcome {
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;
};

// A random schema with widths in [1, max_width] and a vocabulary mixing ASCII
// and multi-byte characters.
struct Domain {
  chartab::encoding::FieldSchema schema;
  chartab::encoding::Vocabulary vocab;
};
Domain random_domain(chartab::Rng& rng, std::size_t max_fields = 6, std::size_t max_width = 6);

// Values no longer than their field width; each missing with probability 1/5.
chartab::encoding::RawExample random_row(chartab::Rng& rng, const Domain& domain,
                                         bool allow_overlong = false);

// decode(encode_structured(row)) == row for rows within width budgets.
Outcome roundtrip(std::size_t n_rows, std::uint64_t seed);
// Placeholder mode rows are exactly one-hot and total_width long, truncation included.
Outcome onehot_rows(std::size_t n_rows, std::uint64_t seed);
// Occlusion keeps the shape and changes exactly `window` rows, all to the occluder.
Outcome occlusion_shape(std::size_t n_rows, std::uint64_t seed);
// Symmetry, identity and triangle inequality of the embedding distance on
// activations of a random-weight model.
Outcome metric_axioms(std::size_t n_triples, std::uint64_t seed);
// Two trainings with equal seeds produce byte-identical bundles.
Outcome training_determinism(std::uint64_t seed);

std::string bundle_bytes(const chartab::models::ModelBundle& bundle);

}  // namespace props

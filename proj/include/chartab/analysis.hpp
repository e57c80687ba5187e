#pragma once

// Interpretability tools for trained bundles: occlusion and gradient x input
// attribution, their combination, aggregation over many rows, pairwise
// hidden-layer embedding distances, and the positional-information
// permutation test.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "chartab/encoding.hpp"
#include "chartab/models.hpp"

namespace chartab::analysis {

enum class Method { occlusion, gradient_input, combined };
enum class Aggregation { max, average };

struct AttributionReport {
  Method method = Method::occlusion;
  // One value per structured matrix row (character position).
  std::vector<double> per_character;
  // One value per schema field.
  std::vector<double> per_column;
  // per_character was divided by its maximum.
  bool normalized = false;
  // The maximum it was divided by (single-example occlusion and gradient reports).
  double scale = 0.0;
  std::size_t sample_count = 1;

  std::size_t argmax_column() const;
};

// Divides by the maximum; an all-zero vector stays all-zero.
std::vector<double> max_normalize(std::span<const double> values);

// Collapses per-character values to per-field values.
std::vector<double> column_values(std::span<const double> per_character,
                                  const encoding::FieldSchema& schema, Aggregation aggregation);

// Window start positions visited by a sweep over `width` characters.
std::vector<std::size_t> occlusion_starts(std::size_t width, std::size_t window,
                                          std::size_t stride);

// |O(x) - O(x_o)| per occluded window (sum over class probabilities for
// classifiers); each character takes the largest value of any window
// covering it, then the vector is max-normalized.
AttributionReport occlusion_attribution(const models::ModelBundle& bundle,
                                        const encoding::EncodedExample& example,
                                        std::size_t window = 2, std::size_t stride = 1);

// |dO/dx| * x summed over each character row, max-normalized. Classifiers
// differentiate the probability of the predicted class.
AttributionReport gradient_input_attribution(const models::ModelBundle& bundle,
                                             const encoding::EncodedExample& example);

// Per character the mean of the two normalized scores; per column the maximum
// of that mean over the column's characters.
AttributionReport combined_attribution(const models::ModelBundle& bundle,
                                       const encoding::EncodedExample& example,
                                       std::size_t window = 2, std::size_t stride = 1);

// Per-column values computed for every example (max or mean over each
// column's characters) and then averaged across examples.
AttributionReport aggregate_attribution(const models::ModelBundle& bundle,
                                        std::span<const encoding::EncodedExample> examples,
                                        Method method, Aggregation aggregation,
                                        std::size_t window = 2, std::size_t stride = 1);

struct EmbeddingPairs {
  std::size_t layer_id = 0;
  // (embedding distance, reference distance) for every unordered pair i < j.
  std::vector<std::pair<double, double>> pairs;
  double correlation = 0.0;
};

// Sum of absolute differences of two flattened activation vectors.
double embedding_distance(std::span<const double> a, std::span<const double> b);

// layer_id counts captured layers from 1 (MLP: hidden layers; transformer:
// encoder layers, then the decoder hidden layer). Rows need regression targets.
EmbeddingPairs pairwise_embedding(const models::ModelBundle& bundle,
                                  std::span<const encoding::RawExample> rows,
                                  std::size_t layer_id);

struct PermutationReport {
  // One L1 output distance per (example, permutation), example-major.
  std::vector<double> deltas;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

// L1 distance between the outputs for `example` and its row-permuted copy.
double permutation_delta(const models::ModelBundle& bundle,
                         const encoding::EncodedExample& example,
                         std::span<const std::size_t> permutation);

PermutationReport permutation_test(const models::ModelBundle& bundle,
                                   std::span<const encoding::EncodedExample> examples,
                                   std::size_t n_permutations, std::uint64_t seed);

// Seeded choice of k distinct indices from [0, n), in ascending order;
// all of them when k >= n.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

// column_name,value
void write_column_csv(std::ostream& out, const AttributionReport& report,
                      const encoding::FieldSchema& schema);
// position,character,value. Characters are taken from `example` when given.
void write_character_csv(std::ostream& out, const AttributionReport& report,
                         const encoding::Vocabulary& vocab,
                         const encoding::EncodedExample* example = nullptr);
// embedding_distance,reference_distance
void write_pairs_csv(std::ostream& out, const EmbeddingPairs& pairs);

}  // namespace chartab::analysis

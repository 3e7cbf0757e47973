#pragma once

#include <random>
#include <span>
#include <vector>

#include "steerlm/autodiff/tensor.hpp"

namespace steerlm {

/// Uniform double in [0,1) from the top 53 bits of one engine draw.
double uniform01(std::mt19937_64& rng);

/// Indices of the k largest values, largest first; equal values keep the lower
/// index first, so a tie at the k-th place goes to the lower token id.
std::vector<int> topk_indices(std::span<const Scalar> values, int k);
std::vector<int> topk_indices(std::span<const double> values, int k);

/// Full softmax of logits / temperature, in double precision.
std::vector<double> softmax(std::span<const Scalar> logits, double temperature = 1.0);

/// Top-k filtering, renormalisation and one multinomial draw. Consumes exactly
/// one engine value. Requires 1 <= k <= V and temperature > 0.
int sample_topk(std::span<const Scalar> logits, int k, double temperature, std::mt19937_64& rng);

/// Same contract over an explicit distribution (PPLM's fused distribution).
int sample_topk_probs(std::span<const double> probs, int k, std::mt19937_64& rng);

}  // namespace steerlm

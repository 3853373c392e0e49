#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fasb/anchoring/activations.hpp"
#include "fasb/anchoring/classifier.hpp"

namespace fasb::anchoring {

// One head's activations for a subset of samples.
struct HeadSamples {
  Eigen::MatrixXd x;  // [n, d_head]
  std::vector<int> labels;
};

struct ProbeOptions {
  double lambda = 1e-3;
  std::size_t max_iterations = 2000;
  double gradient_tolerance = 1e-6;  // stop when max |grad| falls below
};

// Minimizes mean binary cross-entropy of sigmoid(<theta, x>) plus
// (lambda / 2) |theta|^2 by full-batch gradient descent from theta = 0 with
// step 1 / L, L the gradient's Lipschitz constant. Deterministic.
ProbeClassifier train_probe(const HeadSamples& train, const HeadSamples& validation, HeadId head,
                            const ProbeOptions& options = {});

// Class means of the training split; training-free.
PrototypeClassifier build_prototypes(const HeadSamples& train, const HeadSamples& validation, HeadId head,
                                     double tau);

// Top-k by validation accuracy; ties go to non-degenerate heads, then to the
// smaller (layer, head).
std::vector<HeadClassifier> select_heads(std::vector<HeadClassifier> classifiers, std::size_t k);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Seeded shuffle within each label, first `train_fraction` of each class to
// train. Both index lists are returned in ascending order.
SplitIndices stratified_split(const std::vector<std::uint8_t>& labels, double train_fraction, std::uint64_t seed);

HeadSamples head_samples(const ActivationSet& set, HeadId head, const std::vector<std::size_t>& samples);

}  // namespace fasb::anchoring

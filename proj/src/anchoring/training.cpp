#include "fasb/anchoring/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

namespace fasb::anchoring {

namespace {

void require_both_classes(const HeadSamples& samples) {
  const bool has_pos = std::find(samples.labels.begin(), samples.labels.end(), 1) != samples.labels.end();
  const bool has_neg = std::find(samples.labels.begin(), samples.labels.end(), 0) != samples.labels.end();
  require(has_pos && has_neg, "single_class", "training split must contain both labels");
  require(samples.x.allFinite(), "non_finite", "activations must be finite");
}

bool all_rows_identical(const Eigen::MatrixXd& x) {
  for (Eigen::Index r = 1; r < x.rows(); ++r) {
    if (x.row(r) != x.row(0)) return false;
  }
  return true;
}

double majority_rate(const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  const auto ones = std::count(labels.begin(), labels.end(), 1);
  const auto n = static_cast<double>(labels.size());
  return std::max(static_cast<double>(ones), n - static_cast<double>(ones)) / n;
}

}  // namespace

HeadSamples head_samples(const ActivationSet& set, HeadId head, const std::vector<std::size_t>& samples) {
  HeadSamples out{set.head_matrix(head, samples), {}};
  out.labels.reserve(samples.size());
  for (std::size_t i : samples) out.labels.push_back(set.labels()[i]);
  return out;
}

ProbeClassifier train_probe(const HeadSamples& train, const HeadSamples& validation, HeadId head,
                            const ProbeOptions& options) {
  require_both_classes(train);
  const Eigen::Index n = train.x.rows();
  const Eigen::Index d = train.x.cols();

  ProbeClassifier probe{head, Eigen::VectorXf::Zero(d), 0.0, false};
  if (all_rows_identical(train.x)) {
    probe.degenerate = true;
    probe.validation_accuracy = majority_rate(validation.labels);
    return probe;
  }

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = train.labels[static_cast<std::size_t>(i)];

  // Hessian of the mean BCE is bounded by X^T X / (4 n).
  const Eigen::MatrixXd gram = train.x.transpose() * train.x / static_cast<double>(n);
  const double lipschitz =
      0.25 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() +
      options.lambda;
  const double step = 1.0 / lipschitz;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd residual(n);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd z = train.x * theta;
    for (Eigen::Index i = 0; i < n; ++i) residual(i) = math::sigmoid(z(i)) - y(i);
    const Eigen::VectorXd grad =
        train.x.transpose() * residual / static_cast<double>(n) + options.lambda * theta;
    if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance) break;
    theta -= step * grad;
  }
  probe.theta = theta.cast<float>();
  probe.validation_accuracy = accuracy(probe, validation.x, validation.labels);
  return probe;
}

PrototypeClassifier build_prototypes(const HeadSamples& train, const HeadSamples& validation, HeadId head,
                                     double tau) {
  require_both_classes(train);
  require(tau > 0.0, "invalid_argument", "temperature must be > 0");
  const Eigen::Index d = train.x.cols();
  Eigen::VectorXd sum_pos = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum_neg = Eigen::VectorXd::Zero(d);
  double n_pos = 0.0;
  double n_neg = 0.0;
  for (std::size_t i = 0; i < train.labels.size(); ++i) {
    const auto row = train.x.row(static_cast<Eigen::Index>(i)).transpose();
    if (train.labels[i] == 1) {
      sum_pos += row;
      n_pos += 1.0;
    } else {
      sum_neg += row;
      n_neg += 1.0;
    }
  }
  PrototypeClassifier proto{head, (sum_pos / n_pos).cast<float>(), (sum_neg / n_neg).cast<float>(), tau, 0.0, false};
  require(proto.proto_pos.norm() > 0.0F && proto.proto_neg.norm() > 0.0F, "zero_norm_prototype",
          "prototype for head " + to_string(head) + " has zero norm");
  if (all_rows_identical(train.x)) {
    proto.degenerate = true;
    proto.validation_accuracy = majority_rate(validation.labels);
    return proto;
  }
  proto.validation_accuracy = accuracy(proto, validation.x, validation.labels);
  return proto;
}

std::vector<HeadClassifier> select_heads(std::vector<HeadClassifier> classifiers, std::size_t k) {
  require(k >= 1 && k <= classifiers.size(), "invalid_k",
          "k must be in [1, " + std::to_string(classifiers.size()) + "], got " + std::to_string(k));
  std::stable_sort(classifiers.begin(), classifiers.end(), [](const HeadClassifier& a, const HeadClassifier& b) {
    if (accuracy_of(a) != accuracy_of(b)) return accuracy_of(a) > accuracy_of(b);
    if (is_degenerate(a) != is_degenerate(b)) return !is_degenerate(a);
    return head_of(a) < head_of(b);
  });
  classifiers.resize(k);
  return classifiers;
}

SplitIndices stratified_split(const std::vector<std::uint8_t>& labels, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "invalid_argument", "train fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  SplitIndices split;
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation.insert(split.validation.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                            members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

}  // namespace fasb::anchoring

#pragma once

#include <cmath>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "fasb/common/error.hpp"
#include "fasb/model/math.hpp"
#include "fasb/model/types.hpp"

namespace fasb::anchoring {

// sigmoid(<theta, x>); no bias term.
template <typename DerivedT, typename DerivedX>
double probe_probability(const Eigen::MatrixBase<DerivedT>& theta, const Eigen::MatrixBase<DerivedX>& x) {
  return math::sigmoid(math::dot(theta.template cast<double>(), x.template cast<double>()));
}

// Softmax over cosine similarities to the two prototypes at temperature tau.
template <typename DerivedP, typename DerivedN, typename DerivedX>
double prototype_probability(const Eigen::MatrixBase<DerivedP>& proto_pos, const Eigen::MatrixBase<DerivedN>& proto_neg,
                             double tau, const Eigen::MatrixBase<DerivedX>& x) {
  const Eigen::VectorXd xd = x.template cast<double>();
  const Eigen::VectorXd pd = proto_pos.template cast<double>();
  const Eigen::VectorXd nd = proto_neg.template cast<double>();
  const double x_norm = math::norm(xd);
  require(x_norm > 0.0, "degenerate_activation", "cosine similarity undefined for a zero activation");
  const double p_norm = math::norm(pd);
  const double n_norm = math::norm(nd);
  require(p_norm > 0.0 && n_norm > 0.0, "zero_norm_prototype", "cosine similarity undefined for a zero prototype");
  const double cos_pos = math::dot(xd, pd) / (x_norm * p_norm);
  const double cos_neg = math::dot(xd, nd) / (x_norm * n_norm);
  // exp(a)/(exp(a)+exp(b)) == sigmoid(a - b)
  return math::sigmoid((cos_pos - cos_neg) / tau);
}

struct ProbeClassifier {
  HeadId head;
  Eigen::VectorXf theta;
  double validation_accuracy = 0.0;
  bool degenerate = false;
};

struct PrototypeClassifier {
  HeadId head;
  Eigen::VectorXf proto_pos;
  Eigen::VectorXf proto_neg;
  double temperature = 0.1;
  double validation_accuracy = 0.0;
  bool degenerate = false;
};

using HeadClassifier = std::variant<ProbeClassifier, PrototypeClassifier>;

enum class Normalization { raw, unit };

const HeadId& head_of(const HeadClassifier& c);
double accuracy_of(const HeadClassifier& c);
bool is_degenerate(const HeadClassifier& c);

// Desired-behaviour probability in (0, 1). Degenerate classifiers carry no
// information and return 0.5.
double classify(const ProbeClassifier& c, const Eigen::Ref<const Eigen::VectorXf>& x);
double classify(const PrototypeClassifier& c, const Eigen::Ref<const Eigen::VectorXf>& x);
double classify(const HeadClassifier& c, const Eigen::Ref<const Eigen::VectorXf>& x);

// theta (probe) or proto_pos - proto_neg (prototype); `unit` divides by the
// Euclidean norm and fails on a zero vector.
Eigen::VectorXf steering_direction(const HeadClassifier& c, Normalization normalization);

// Fraction of rows whose predicted class (p > 0.5) matches the label.
double accuracy(const HeadClassifier& c, const Eigen::MatrixXd& x, const std::vector<int>& labels);

}  // namespace fasb::anchoring

#include "fasb/anchoring/classifier.hpp"

namespace fasb::anchoring {

const HeadId& head_of(const HeadClassifier& c) {
  return std::visit([](const auto& v) -> const HeadId& { return v.head; }, c);
}

double accuracy_of(const HeadClassifier& c) {
  return std::visit([](const auto& v) { return v.validation_accuracy; }, c);
}

bool is_degenerate(const HeadClassifier& c) {
  return std::visit([](const auto& v) { return v.degenerate; }, c);
}

double classify(const ProbeClassifier& c, const Eigen::Ref<const Eigen::VectorXf>& x) {
  require(x.size() == c.theta.size(), "invalid_activation", "activation length != d_head");
  if (c.degenerate) return 0.5;
  return probe_probability(c.theta, x);
}

double classify(const PrototypeClassifier& c, const Eigen::Ref<const Eigen::VectorXf>& x) {
  require(x.size() == c.proto_pos.size(), "invalid_activation", "activation length != d_head");
  if (c.degenerate) return 0.5;
  return prototype_probability(c.proto_pos, c.proto_neg, c.temperature, x);
}

double classify(const HeadClassifier& c, const Eigen::Ref<const Eigen::VectorXf>& x) {
  return std::visit([&](const auto& v) { return classify(v, x); }, c);
}

Eigen::VectorXf steering_direction(const HeadClassifier& c, Normalization normalization) {
  Eigen::VectorXf v = std::visit(
      [](const auto& cls) -> Eigen::VectorXf {
        if constexpr (std::is_same_v<std::decay_t<decltype(cls)>, ProbeClassifier>) {
          return cls.theta;
        } else {
          return cls.proto_pos - cls.proto_neg;
        }
      },
      c);
  if (normalization == Normalization::unit) {
    const double n = math::norm(v.cast<double>());
    require(n > 0.0, "zero_direction", "cannot unit-normalize a zero steering vector for head " +
                                           to_string(head_of(c)));
    v = (v.cast<double>() / n).cast<float>();
  }
  return v;
}

double accuracy(const HeadClassifier& c, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Eigen::VectorXf row = x.row(static_cast<Eigen::Index>(i)).transpose().cast<float>();
    const int predicted = classify(c, row) > 0.5 ? 1 : 0;
    correct += predicted == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace fasb::anchoring
